"""Stochastic amortization: learning per-example attributions and data values from noisy labels."""

__version__ = "0.1.0"
