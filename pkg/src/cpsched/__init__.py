"""Bandwidth-constrained collaborative perception: scheduling library and simulator."""

__version__ = "0.1.0"
