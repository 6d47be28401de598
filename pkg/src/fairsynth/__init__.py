"""Differentially private synthetic data with fairness-aware preprocessing."""
__version__ = "0.1.0"
