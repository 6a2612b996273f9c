"""Disordered pinning models on power-law renewals: kernels, free energies,
partition-function recursions, exact samplers and an experiment runner."""

__version__ = "0.1.0"
