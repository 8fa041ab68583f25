"""Spectral and Monte Carlo laboratory for the Wick-renormalized cubic NLS."""
__version__ = "0.1.0"
