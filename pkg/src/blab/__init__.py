"""Counterexample distributions and box-classifier networks: instability, robust twins and certificate failure."""

__version__ = "0.1.0"
