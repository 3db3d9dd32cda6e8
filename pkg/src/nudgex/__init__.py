"""Nudgex: mining-site satellite captioning pipeline with judge gating and RAG."""

__version__ = "0.1.0"
