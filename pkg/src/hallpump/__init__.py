"""Finite-torus laboratory for the quantum Hall charge pump."""

__version__ = "0.1.0"
