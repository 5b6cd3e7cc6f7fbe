"""Bounds and Monte-Carlo simulation for M-ary coherent FSK quantum receivers."""

__version__ = "0.1.0"
