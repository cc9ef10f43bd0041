"""Toolkit for simulating and analysing DCQD-style process tomography."""

__version__ = "0.1.0"
