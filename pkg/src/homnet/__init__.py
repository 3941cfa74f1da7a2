"""Homophily and link prediction from music-listening behavior."""

__version__ = "0.1.0"
