"""Analog beam tracking for temporally correlated mmWave MIMO channels."""

__version__ = "0.1.0"
