"""Numerical laboratory for small-data blow-up of damped semilinear wave equations."""

__version__ = "0.1.0"
