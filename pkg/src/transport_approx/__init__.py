"""Transport-map approximation of probability distributions."""

__version__ = "0.1.0"
