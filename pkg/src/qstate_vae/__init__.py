"""Variational autoencoders that learn entanglement from two-qubit density matrices."""

__version__ = "0.1.0"
