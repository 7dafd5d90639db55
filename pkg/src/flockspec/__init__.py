"""Pseudospectral simulation and verification of unidirectional Euler alignment flocks."""

__version__ = "0.1.0"
