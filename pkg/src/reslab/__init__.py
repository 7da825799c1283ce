"""Numerical laboratory for Hermite analysis, resilience and L1 degree under the Gaussian measure."""

__version__ = "0.1.0"
