"""Vulnerability detection on C functions with code property graphs and graph attention."""

__version__ = "0.1.0"
