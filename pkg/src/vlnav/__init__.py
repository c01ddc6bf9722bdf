"""Desk-scale vision-and-language navigation in a synthetic graph world."""

__version__ = "0.1.0"
