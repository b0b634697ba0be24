"""Sampling heavy-tailed densities ``pi ∝ V**(-beta)`` with weighted Langevin chains."""

__version__ = "0.1.0"
