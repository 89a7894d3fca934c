"""Gaze-prompted video object segmentation with prompt refinement."""

__version__ = "0.1.0"
