"""Greedy-weighted ensemble pipeline for loan default prediction."""

__version__ = "0.1.0"
