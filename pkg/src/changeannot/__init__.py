"""Bi-temporal change detection and keyword annotation for satellite image pairs."""

__version__ = "0.1.0"
