"""Sequence-to-point knowledge distillation for short-term GPU-node load forecasting."""

__version__ = "0.1.0"
