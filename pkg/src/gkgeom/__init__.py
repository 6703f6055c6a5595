"""Numerical verification toolkit for generalized complex and generalized Kähler geometry."""

__version__ = "0.1.0"
