"""Numerical lab for linear inviscid damping around monotone shear flows."""

__version__ = "0.1.0"
