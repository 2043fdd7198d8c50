"""Cooperative nonstochastic bandits on communication graphs with delayed messages."""

__version__ = "0.1.0"
