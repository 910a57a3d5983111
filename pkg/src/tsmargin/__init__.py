"""Individual-machine equal-area transient stability margins."""

__version__ = "0.1.0"
