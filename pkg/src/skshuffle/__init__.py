"""Simulation and analysis of the S_k block shuffle on N cards."""

__version__ = "0.1.0"
