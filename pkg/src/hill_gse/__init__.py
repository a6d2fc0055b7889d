"""Ground-state energy statistics of Hill's operator with a Gaussian potential."""

__version__ = "0.1.0"
