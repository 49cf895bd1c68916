"""Broad Mamba: bidirectional SSM convolution, broad learning and probability-guided fusion."""

__version__ = "0.1.0"
