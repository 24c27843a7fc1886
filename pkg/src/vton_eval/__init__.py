"""Evaluation engine and benchmark harness for virtual try-on outputs."""

__version__ = "0.1.0"
