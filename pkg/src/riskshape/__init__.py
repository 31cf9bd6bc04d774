"""Risk-aware reward shaping lab for a top-down 2D racing car."""

__version__ = "0.1.0"
