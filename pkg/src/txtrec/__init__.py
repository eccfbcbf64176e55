"""txtrec - Context-aware next-item recommendation with Transformer Cross Transformer models."""

__version__ = "0.1.0"
