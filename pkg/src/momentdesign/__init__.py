"""Approximate optimal designs for polynomial regression on semi-algebraic sets."""

__version__ = "0.1.0"
