"""Numerical laboratory for a measurement-driven two-level quantum information engine."""

__version__ = "0.1.0"
