"""Real-time video portrait relighting toolkit."""

__version__ = "0.1.0"
