"""Field-test driving requirements and reduction approaches for residual-risk validation."""

__version__ = "0.1.0"
