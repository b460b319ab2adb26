"""Brownian-bridge line ensembles, tangent-method geometry and tail estimators."""

__version__ = "0.1.0"
