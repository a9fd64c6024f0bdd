"""Causal-model-driven generation of risky driving scenarios."""

__version__ = "0.1.0"
