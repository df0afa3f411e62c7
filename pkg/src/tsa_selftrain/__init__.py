"""Self-training pipeline for multi-domain targeted sentiment analysis."""

__version__ = "0.1.0"
