"""Multimodal architecture search by budgeted random sampling with shared weights."""

__version__ = "0.1.0"
