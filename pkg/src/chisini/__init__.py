"""Conditional Chisini means on finite measurable spaces."""

from .functionals import Choquet, Entropic, Linear, QuasiArithmetic, Tabulated
from .solver import chisini_mean, conditional_chisini, verify_system
from .space import FiniteSpace, SigmaAlgebra, partition_from_labels

__all__ = [
    "Choquet",
    "Entropic",
    "FiniteSpace",
    "Linear",
    "QuasiArithmetic",
    "SigmaAlgebra",
    "Tabulated",
    "chisini_mean",
    "conditional_chisini",
    "partition_from_labels",
    "verify_system",
]

__version__ = "0.1.0"
