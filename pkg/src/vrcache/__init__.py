"""Personalized federated caching of 360-degree video tiles at edge base stations."""

from . import channel, core, optimizer, strategy, trace

__version__ = "0.1.0"

__all__ = ["channel", "core", "optimizer", "strategy", "trace", "__version__"]
