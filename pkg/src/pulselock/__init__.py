"""Steady-state spin mode-locking and nuclear feedback in optically pumped quantum dots."""

__version__ = "0.1.0"
