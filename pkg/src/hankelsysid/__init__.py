"""Low-order LTI system identification with Hankel nuclear norm regularization."""

__version__ = "0.1.0"
