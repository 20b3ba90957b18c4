"""Exact simulation and analysis of a lattice competition model with allelopathy."""

__version__ = "0.1.0"
