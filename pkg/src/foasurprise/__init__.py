"""Self-supervised spatial-audio surprise detection for 360-video viewport prediction."""

__version__ = "0.1.0"
