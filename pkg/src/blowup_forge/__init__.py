"""Numerical toolkit for two-bubble type-II blow-up in the five-dimensional critical heat flow."""

__version__ = "0.1.0"
