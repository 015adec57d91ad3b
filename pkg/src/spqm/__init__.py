"""Computational toolkit for quantum mechanics built on Sp(2n, R)."""

__version__ = "0.1.0"
