"""Stable-manifold optimal control for sampled-data nonlinear systems."""

__version__ = "0.1.0"
