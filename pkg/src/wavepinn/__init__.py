"""Wavelet-certified physics-informed networks for 1D periodic elliptic problems."""

__version__ = "0.1.0"
