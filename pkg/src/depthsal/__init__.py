"""Depth-sensitive RGB-D salient object detection with searched fusion."""

__version__ = "0.1.0"
