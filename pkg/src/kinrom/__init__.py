"""Reduced order modeling toolkit for parametric kinetic transport in 1D slabs."""

__version__ = "0.1.0"
