"""Finsler sprays, lifts and symmetry classification of vector fields."""

__version__ = "0.1.0"
