"""Qubit-controlled displacement in a thermal environment: C-Matrix solver and Fock oracle."""

__all__ = ["__version__"]

__version__ = "0.1.0"
