"""Numerical laboratory for Lipschitz BSDEs and g-expectations."""

__version__ = "0.1.0"
