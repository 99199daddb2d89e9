"""Spectral simulation lab for the stochastic quasi-geostrophic equation on T^2."""

__version__ = "0.1.0"
