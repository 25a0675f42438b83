"""Data-enabled predictive control toolkit for building energy hubs."""

__version__ = "0.1.0"
