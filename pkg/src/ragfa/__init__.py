"""Retrieval-augmented question answering over Persian text."""

__version__ = "0.1.0"
