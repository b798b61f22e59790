"""Scrapbook: synthetic VQA dataset generation and evaluation harness."""

__version__ = "0.1.0"
