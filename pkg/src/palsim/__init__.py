"""Simulation-to-evaluation toolkit for minimalist panoramic annular lens imaging."""

__version__ = "0.1.0"
