"""Two-particle Bragg interferometry with entangled atom pairs from colliding condensates."""

__version__ = "0.1.0"
