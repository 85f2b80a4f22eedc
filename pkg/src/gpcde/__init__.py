"""Density evolution, bit-mapper design and Monte Carlo validation for
deterministic generalized product codes."""

__version__ = "0.1.0"
