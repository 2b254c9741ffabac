"""Quantum Langevin heat transport through harmonic chains."""

__version__ = "0.1.0"
