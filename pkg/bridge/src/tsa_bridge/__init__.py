"""Transformer token-classification server for the tagger wire protocol."""

__version__ = "0.1.0"
