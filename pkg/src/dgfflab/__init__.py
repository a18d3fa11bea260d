"""Simulation tools for two-sided level-set percolation of the 2D discrete Gaussian free field."""

__version__ = "0.1.0"
