"""Inference adapter for the VTON evaluation engine."""

__version__ = "0.1.0"
