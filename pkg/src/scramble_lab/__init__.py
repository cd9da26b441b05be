"""Hybrid TFIM circuits with forced measurements, analysed through the Choi state."""

__version__ = "0.1.0"
