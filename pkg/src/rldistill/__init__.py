"""rldistill: compress an N-dimensional cart-pole environment into a
single-batch synthetic supervised dataset via meta-gradients through PPO."""

__version__ = "0.1.0"
