"""Density-matrix simulation of one-clean-qubit computation with a cavity register."""

__version__ = "0.1.0"
