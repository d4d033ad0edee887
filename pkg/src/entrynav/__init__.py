"""Adaptive Mars-entry navigation with an online-tuned neural density model."""

__version__ = "0.1.0"
