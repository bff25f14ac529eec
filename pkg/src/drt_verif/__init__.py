"""Symbolic verification toolkit for dynamic-root-of-trust platform models."""

__version__ = "0.1.0"
