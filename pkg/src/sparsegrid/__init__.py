"""Data-sparsity benchmark for fault detection and fault line identification
on a synthetic three-bus double-line transmission grid."""

__version__ = "0.1.0"
