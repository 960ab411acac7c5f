"""Joint sensor-driven maintenance and TSPTW routing."""

__version__ = "0.1.0"
