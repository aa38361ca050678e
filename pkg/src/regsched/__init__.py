"""Integrated register allocation and instruction scheduling toolkit."""

__version__ = "0.1.0"
