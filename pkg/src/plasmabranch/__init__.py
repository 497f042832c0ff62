"""Positive solutions of -Laplace psi = (alpha + lambda psi)^p with unit mass.

Modules: ``domain`` (grids and operators), ``state`` (Picard and Newton
solvers), ``spectral`` (linearized spectrum, Sobolev constants),
``continuation`` (branch tracing), ``observables`` (energies),
``verification`` and ``cli``.
"""
from .domain import build_domain
from .state import Solution, newton_solve, solve_small_lambda, to_free_boundary
from .continuation import trace_branch

__all__ = ["build_domain", "Solution", "newton_solve", "solve_small_lambda", "to_free_boundary", "trace_branch"]
__version__ = "0.1.0"
