"""Emotion-conditioned conversation generation at desk scale."""

__version__ = "0.1.0"
