"""Centroid-based metric learning and vector retrieval toolkit."""

from .backend import BACKEND

__all__ = ["BACKEND", "__version__"]

__version__ = "0.1.0"
