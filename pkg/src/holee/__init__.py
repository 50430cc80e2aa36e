"""Arbitrage-free stationary multi-factor Ho-Lee term-structure engine."""

from .errors import ArbitrageError, HedgeError, ValidationError
from .factors import FactorDistribution, OrthogonalSpec, binary_ho_lee, from_orthogonal_matrix, simplex_factor
from .lattice import Lattice, LatticeNode, build
from .model import ForwardCurve, TermStructureModel, assemble
from .volstruct import CoarseVolMatrix, VolatilityTermStructure

__all__ = [
    "ArbitrageError",
    "CoarseVolMatrix",
    "FactorDistribution",
    "ForwardCurve",
    "HedgeError",
    "Lattice",
    "LatticeNode",
    "OrthogonalSpec",
    "TermStructureModel",
    "ValidationError",
    "VolatilityTermStructure",
    "assemble",
    "binary_ho_lee",
    "build",
    "from_orthogonal_matrix",
    "simplex_factor",
]

__version__ = "0.1.0"
