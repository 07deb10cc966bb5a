"""Homogenization laboratory for weakly coupled Hamilton-Jacobi systems with fast switching.

The package solves the oscillatory coupled system, extracts effective
Hamiltonians from discounted cell problems, checks matched-asymptotic
convergence, effective initial and boundary data, flat parts of effective
Hamiltonians and stochastic control representations.
"""
from __future__ import annotations

from coupledhj.grid import CouplingMatrix, StateField, TorusGrid
from coupledhj.hamiltonians import Component, HamiltonianSpec

__all__ = ["CouplingMatrix", "StateField", "TorusGrid", "Component", "HamiltonianSpec"]
__version__ = "0.1.0"
