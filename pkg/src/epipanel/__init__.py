"""Harmonized regional epidemic panels, positive-fraction trends and
mortality comparison curves."""

__version__ = "0.1.0"
