"""Baseline-adjusted cost-effectiveness analysis for two-arm trials with missing data."""

__version__ = "0.1.0"
