"""Exact structure theory toolkit for low-degree polynomials over prime fields."""
from .ffpoly import Polynomial, PrimeField, TruthTable, reduce, random_polynomial

__all__ = ["Polynomial", "PrimeField", "TruthTable", "reduce", "random_polynomial"]
__version__ = "0.1.0"
