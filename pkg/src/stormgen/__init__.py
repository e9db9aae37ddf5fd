"""Stochastic daily precipitation scenarios conditioned on extreme-event probability."""

__version__ = "0.1.0"
