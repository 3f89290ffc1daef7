"""Finite element laboratory for h-uniform estimates of the discrete heat semigroup."""

__version__ = "0.1.0"
