"""Nonparametric tests for the colour-blind two-sample problem."""

__version__ = "1.0.0"
