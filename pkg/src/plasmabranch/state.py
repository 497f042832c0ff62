"""Solvers for the constrained problem

    -Laplace psi = (alpha + lambda psi)^p,   int (alpha + lambda psi)^p = 1,
    psi = 0 on the boundary,

with unknowns (alpha, psi) at a given lambda.  Two independent routes:

* ``solve_small_lambda``: Picard iteration for u = lambda psi at fixed alpha,
  then a scalar root find on alpha for the mass constraint.
* ``newton_solve``: Newton on the bordered system in (psi, alpha), which also
  works beyond the Picard range as long as the linearization is invertible.

States with radial symmetry on the disk are solved on the radial sub-grid and
lifted to the polar grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import (
    BoundViolationError,
    BracketError,
    ConvergenceError,
    NonContractionError,
    PositivityLossError,
    SingularLinearizationError,
)

RESIDUAL_TOL = 1e-12
# merit level treated as converged when rounding stalls the line search
ROUNDOFF_MERIT = 1e-8
# a full Newton step this small (relative) means the iteration has converged
STEP_TOL = 1e-11


def density(alpha, lam, psi, p):
    base = np.maximum(alpha + lam * psi, 0.0)
    return base**p


def weight(alpha, lam, psi, p):
    if p == 1:
        return np.ones_like(psi)
    return np.maximum(alpha + lam * psi, 0.0) ** (p - 1)


@dataclass(frozen=True, eq=False)
class Solution:
    """A solution (alpha, psi) at (lambda, p).

    Fields are stored on ``domain.core`` (the radial sub-grid for the disk);
    the ``psi``, ``rho`` and ``weight`` properties return them on ``domain``.
    """

    domain: object
    lam: float
    p: float
    alpha: float
    psi_core: np.ndarray
    iterations: int = 0
    method: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def core(self):
        return self.domain.core

    @property
    def q(self):
        return self.p / (self.p - 1) if self.p != 1 else np.inf

    @property
    def tau(self):
        return self.p * self.lam

    @cached_property
    def rho_core(self):
        return density(self.alpha, self.lam, self.psi_core, self.p)

    @cached_property
    def weight_core(self):
        return weight(self.alpha, self.lam, self.psi_core, self.p)

    @cached_property
    def m(self):
        return self.core.integrate(self.weight_core)

    @cached_property
    def psi(self):
        return self.domain.lift(self.psi_core)

    @cached_property
    def rho(self):
        return self.domain.lift(self.rho_core)

    @cached_property
    def weight(self):
        return self.domain.lift(self.weight_core)

    @cached_property
    def residual_norm(self):
        """Max-norm of -Laplace psi - rho over interior nodes."""
        core = self.core
        r = core.laplacian_apply(self.psi_core) - self.rho_core
        return float(np.abs(r[core.interior]).max())

    @cached_property
    def mass_error(self):
        return abs(self.core.integrate(self.rho_core) - 1.0)

    def mean(self, f):
        """Weighted mean <f> with weight b on the core grid."""
        return self.core.weighted_mean(f, self.weight_core)

    def fluct(self, f):
        return self.core.weighted_fluctuation(f, self.weight_core)


@dataclass(frozen=True)
class FreeBoundaryView:
    """The same state written as -Laplace v = v_+^p, v = gamma on the boundary,
    with outward flux I = -int dv/dnu."""

    I: float
    gamma: float
    v: np.ndarray
    flux: float

    @property
    def flux_residual(self):
        return abs(self.flux - self.I) / self.I


def _check_params(lam, p):
    if not np.isfinite(lam) or lam < 0:
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")
    if not np.isfinite(p) or p < 1:
        raise ValueError(f"p must be >= 1, got {p}")


# ---------------------------------------------------------------- Picard route


@dataclass
class PicardResult:
    u: np.ndarray
    iterations: int
    factors: list


def picard_inner_solve(domain, lam, alpha, p, tol=1e-14, max_iter=1000):
    """Fixed point u = lambda G[(alpha + u)^p] on the core grid.

    Raises NonContractionError as soon as successive differences stop
    shrinking by a factor below 0.95.
    """
    _check_params(lam, p)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    core = domain.core
    u = np.zeros(core.n_nodes)
    if lam == 0:
        return PicardResult(u, 0, [])
    prev = None
    factors = []
    slow = 0
    for k in range(1, max_iter + 1):
        new = lam * core.green_apply((alpha + u) ** p)
        d = float(np.abs(new - u).max())
        u = new
        if not np.isfinite(d) or u.max() > 1e8:
            raise NonContractionError(f"Picard iterate blew up at step {k}")
        scale = max(1.0, float(u.max()))
        if d <= tol * scale:
            return PicardResult(u, k, factors)
        if prev is not None and prev > 0:
            f = d / prev
            factors.append(f)
            slow = slow + 1 if f > 0.95 else 0
            if slow >= 3:
                raise NonContractionError(
                    f"Picard factor {f:.3f} at step {k} (lambda={lam}, alpha={alpha}, p={p})"
                )
        prev = d
    raise NonContractionError(f"Picard did not reach tol {tol} in {max_iter} steps")


def mass_deficit(domain, lam, alpha, p, tol=1e-14):
    """int (alpha + u_alpha)^p - 1 where u_alpha is the Picard fixed point."""
    res = picard_inner_solve(domain, lam, alpha, p, tol)
    return domain.core.integrate((alpha + res.u) ** p) - 1.0


def solve_small_lambda(domain, lam, p, tol=1e-14, alpha_min=1e-8):
    """Solution for small lambda via Picard iteration plus a root find on alpha."""
    _check_params(lam, p)
    core = domain.core
    if lam == 0:
        psi = core.green_apply(np.ones(core.n_nodes))
        return Solution(domain, 0.0, p, 1.0, psi, 0, "picard")
    lo = mass_deficit(domain, lam, alpha_min, p, tol)
    # the fixed point may fail to exist for large alpha; shrink the upper end
    alpha_max = 1.0
    while True:
        try:
            hi = mass_deficit(domain, lam, alpha_max, p, tol)
            break
        except NonContractionError:
            alpha_max *= 0.95
            if alpha_max <= alpha_min:
                raise
    if not (lo < 0 <= hi):
        raise BracketError(f"mass deficit has no sign change on [{alpha_min}, {alpha_max}]: {lo}, {hi}")
    calls = [0]

    def g(a):
        calls[0] += 1
        return mass_deficit(domain, lam, a, p, tol)

    alpha = brentq(g, alpha_min, alpha_max, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    u = picard_inner_solve(domain, lam, alpha, p, tol).u
    return Solution(domain, float(lam), p, float(alpha), u / lam, calls[0], "picard")


# ---------------------------------------------------------------- Newton route


def _jacobian(core, lam, p, alpha, psi_i, constraint):
    """Bordered Jacobian in the unknowns (psi_interior, alpha, lambda).

    Rows: field equation K psi - w rho, mass constraint, and a linear
    constraint row given as (c_psi, c_alpha, c_lambda).
    """
    I = core.interior
    w = core.mass
    base = np.maximum(alpha + lam * psi_i, 0.0)
    b = base ** (p - 1) if p != 1 else np.ones_like(psi_i)
    beta = w * b
    bnd = ~np.isin(np.arange(core.n_nodes), I)
    wb_bnd = core.weights[bnd] * (alpha ** (p - 1) if p != 1 else 1.0)
    tau = p * lam
    n = I.size
    top = core.stiffness - tau * sp.diags(beta)
    col_a = (-p * beta)[:, None]
    col_l = (-p * beta * psi_i)[:, None]
    m_total = beta.sum() + wb_bnd.sum()
    row_mass = np.concatenate([tau * beta, [p * m_total, p * (beta @ psi_i)]])[None, :]
    c_psi, c_a, c_l = constraint
    row_c = np.concatenate([c_psi, [c_a, c_l]])[None, :]
    J = sp.bmat(
        [
            [top, sp.csc_matrix(col_a), sp.csc_matrix(col_l)],
            [sp.csc_matrix(row_mass[:, :n]), sp.csc_matrix(row_mass[:, n:n + 1]), sp.csc_matrix(row_mass[:, n + 1:])],
            [sp.csc_matrix(row_c[:, :n]), sp.csc_matrix(row_c[:, n:n + 1]), sp.csc_matrix(row_c[:, n + 1:])],
        ],
        format="csc",
    )
    return J


def _residual(core, lam, p, alpha, psi_i, constraint, target):
    w = core.mass
    rho_i = np.maximum(alpha + lam * psi_i, 0.0) ** p
    F = core.stiffness @ psi_i - w * rho_i
    bnd_mass = (core.weights.sum() - w.sum()) * max(alpha, 0.0) ** p
    G = w @ rho_i + bnd_mass - 1.0
    c_psi, c_a, c_l = constraint
    H = c_psi @ psi_i + c_a * alpha + c_l * lam - target
    return F, G, H, rho_i


def bordered_newton(
    domain,
    p,
    alpha,
    lam,
    psi_core,
    constraint,
    target,
    max_iter=40,
    tol=RESIDUAL_TOL,
    psi_bound=None,
):
    """Newton for (psi, alpha, lambda) with one extra linear constraint.

    ``constraint`` is (c_psi on interior nodes, c_alpha, c_lambda) and
    ``target`` its right-hand side.  Fixing lambda is the constraint
    (0, 0, 1) = lambda; fixing alpha is (0, 1, 0) = alpha.
    Returns (Solution, iterations).
    """
    core = domain.core
    I = core.interior
    psi_i = np.array(psi_core[I], dtype=float)
    bound = core.green_sup if psi_bound is None else psi_bound

    def merit(F, G, H, rho_i):
        scale = max(1.0, float(rho_i.max()))
        return max(float(np.abs(F / core.mass).max()) / scale, abs(G), abs(H))

    F, G, H, rho_i = _residual(core, lam, p, alpha, psi_i, constraint, target)
    phi = merit(F, G, H, rho_i)
    n = I.size
    for it in range(1, max_iter + 1):
        J = _jacobian(core, lam, p, alpha, psi_i, constraint)
        try:
            lu = spla.splu(J)
        except RuntimeError as exc:
            raise SingularLinearizationError(str(exc)) from exc
        delta = lu.solve(-np.concatenate([F, [G, H]]))
        if not np.all(np.isfinite(delta)):
            raise SingularLinearizationError("non-finite Newton step")
        t = 1.0
        for _ in range(30):
            a_new = alpha + t * delta[n]
            l_new = lam + t * delta[n + 1]
            p_new = psi_i + t * delta[:n]
            ok = a_new >= 0 and l_new >= 0 and float(np.min(a_new + l_new * p_new)) >= 0.5 * a_new
            if ok:
                F2, G2, H2, rho2 = _residual(core, l_new, p, a_new, p_new, constraint, target)
                phi2 = merit(F2, G2, H2, rho2)
                if phi2 < phi or phi2 < 1e-14:
                    break
            t *= 0.5
        else:
            if phi <= ROUNDOFF_MERIT:
                break
            if not ok:
                raise PositivityLossError(
                    f"no admissible step from alpha={alpha:.3e}, lambda={lam:.6g}"
                )
            raise ConvergenceError(f"line search failed at iteration {it}, merit {phi:.3e}")
        alpha, lam, psi_i = a_new, l_new, p_new
        F, G, H, rho_i = F2, G2, H2, rho2
        phi = phi2
        if psi_i.max() > 10 * bound:
            raise BoundViolationError(f"max psi {psi_i.max():.3e} exceeds 10x bound {bound:.3e}")
        step = float(np.abs(t * delta).max())
        scale = max(1.0, float(np.abs(psi_i).max()), abs(alpha), abs(lam))
        if phi <= tol or (t == 1.0 and step <= STEP_TOL * scale and phi <= ROUNDOFF_MERIT):
            break
    else:
        raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (merit {phi:.3e})")
    psi_full = core.zeros()
    psi_full[I] = psi_i
    if psi_full.max() > bound * (1 + 1e-6):
        raise BoundViolationError(f"max psi {psi_full.max():.6e} exceeds a priori bound {bound:.6e}")
    if alpha < 0 or (alpha + lam * psi_full).min() < 0:
        raise PositivityLossError("converged state is not positive")
    return Solution(domain, float(lam), p, float(alpha), psi_full, it, "newton"), it


def _initial_fields(domain, initial):
    core = domain.core
    if initial is None:
        return 1.0, core.green_apply(np.ones(core.n_nodes))
    if isinstance(initial, Solution):
        return initial.alpha, initial.psi_core
    alpha, psi = initial
    psi = np.asarray(psi, dtype=float)
    if psi.size != core.n_nodes:
        psi = domain.restrict(psi)
    return float(alpha), psi


def newton_solve(domain, lam, p, initial=None, tol=RESIDUAL_TOL, max_iter=40):
    """Newton solve at fixed lambda.  ``initial`` is a Solution or (alpha, psi)."""
    _check_params(lam, p)
    alpha, psi = _initial_fields(domain, initial)
    zero = np.zeros(domain.core.interior.size)
    sol, _ = bordered_newton(domain, p, alpha, lam, psi, (zero, 0.0, 1.0), lam, max_iter, tol)
    return sol


def solve_at_alpha(domain, alpha, p, initial, tol=RESIDUAL_TOL, max_iter=40):
    """Newton solve with alpha fixed and lambda unknown (used near alpha = 0)."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    a0, psi = _initial_fields(domain, initial)
    lam0 = initial.lam if isinstance(initial, Solution) else 1.0
    zero = np.zeros(domain.core.interior.size)
    sol, _ = bordered_newton(domain, p, alpha, lam0, psi, (zero, 1.0, 0.0), alpha, max_iter, tol)
    return sol


def to_free_boundary(solution):
    """Map to (I, gamma, v) with I = lambda^q, gamma = lambda^{1/(p-1)} alpha."""
    p, lam = solution.p, solution.lam
    if p == 1:
        raise ValueError("the free-boundary map needs p > 1")
    if lam <= 0:
        raise ValueError("the free-boundary map needs lambda > 0")
    s = lam ** (1.0 / (p - 1))
    v_core = s * (solution.alpha + lam * solution.psi_core)
    I = lam ** (p / (p - 1))
    flux = solution.core.boundary_flux(v_core - s * solution.alpha)
    return FreeBoundaryView(I, s * solution.alpha, solution.domain.lift(v_core), flux)
