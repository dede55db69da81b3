"""Numerical homogenization of the Neumann p-Laplacian on thin domains with oscillating boundary."""

__version__ = "0.1.0"
