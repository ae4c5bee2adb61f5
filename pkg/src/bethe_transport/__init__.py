"""Quantum transport of a particle in a random potential on rooted regular trees."""

__version__ = "0.1.0"
