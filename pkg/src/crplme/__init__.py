"""Locational marginal emissions via critical-region projection of DC SCED."""

__version__ = "0.1.0"
