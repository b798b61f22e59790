"""Model adapter: runs a VLM over a generated dataset, writes responses.jsonl."""

__version__ = "0.1.0"
