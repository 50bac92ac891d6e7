"""Group-sparsity-constrained temporal attention for multi-branch attribute classification."""

__version__ = "0.1.0"
