"""Numerical laboratory for log-type stability of the inverse conductivity problem."""

__version__ = "0.1.0"
