"""Multi-particle multi-scale analysis laboratory."""
__version__ = "0.1.0"
