"""Symmetric low-regularity integrators for periodic NLS and KdV."""

__version__ = "0.1.0"
