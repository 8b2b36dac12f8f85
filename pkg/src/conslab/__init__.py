"""Numerical laboratory for 1-D scalar conservation laws with local and non-local fluxes."""

__version__ = "0.1.0"
