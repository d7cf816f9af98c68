"""Numerical exploration of L_p contractivity for elliptic systems with complex coefficients."""

__version__ = "0.1.0"
