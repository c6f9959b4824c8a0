"""Learns conditional-formatting rules for a column from formatted examples."""

__version__ = "0.1.0"
