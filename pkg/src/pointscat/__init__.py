"""Point-interaction Schrodinger operators and their regular-potential limits."""

__version__ = "0.1.0"
