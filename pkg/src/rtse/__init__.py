"""Causal single-channel speech enhancement with a stacked-GRU spectral gain estimator."""

__version__ = "0.1.0"
