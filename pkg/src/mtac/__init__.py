"""Noise-robust multi-task emotion classifier training framework."""

__version__ = "0.1.0"
