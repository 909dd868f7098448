"""Exogeneity diagnostics and sharp partial-identification bounds."""

__version__ = "1.0.0"
