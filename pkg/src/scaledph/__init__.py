"""Scaled inhomogeneous phase-type distributions."""

__version__ = "0.1.0"
