"""Simulation toolkit for bismuth donor spins near superconducting resonators."""

__version__ = "0.1.0"
