"""Heterogeneity-aware gradient coding: construction, verification, simulation and a TCP runtime."""

__version__ = "0.1.0"
