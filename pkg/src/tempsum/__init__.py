"""Numeric-to-text summaries of personal health time series."""

__version__ = "0.1.0"
