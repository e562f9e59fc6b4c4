"""Multimodal misinformation tweet classification with explainable GAT models."""

__version__ = "0.1.0"
