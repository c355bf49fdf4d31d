"""Semi-supervised debiased inference for linear functionals of a high-dimensional projection parameter."""

__version__ = "0.1.0"
