"""Simulation and estimation toolkit for critical random affine recursions."""

__version__ = "0.1.0"
