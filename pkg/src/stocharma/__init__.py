"""Stochastic ARMA models as linear-Gaussian graphical models."""

__version__ = "0.1.0"
