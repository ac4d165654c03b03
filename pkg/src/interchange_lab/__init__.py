"""Simulation and Monte Carlo checks for the interchange process on path graphs."""

__version__ = "0.1.0"
