"""Curation, augmentation and optimality-gap evaluation of AC transmission test cases."""

__version__ = "0.1.0"
