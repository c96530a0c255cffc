"""Coil winding surface shape optimization for stellarators."""

__version__ = "0.1.0"
