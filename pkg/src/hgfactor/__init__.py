"""Hypergraph factor model for cross-sectional stock return prediction."""

__version__ = "0.1.0"

from .estimator import HypergraphFactorRegressor

__all__ = ["HypergraphFactorRegressor", "__version__"]
