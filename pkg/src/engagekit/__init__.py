"""Multimodal engagement prediction from physiological and voice recordings."""
__version__ = "0.1.0"
