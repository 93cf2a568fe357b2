"""Bilevel work-cell optimization over planar modular robots."""

__version__ = "0.1.0"
