"""Branch tracing from lambda = 0 along the positive solutions.

Natural-parameter steps in lambda while the first constrained eigenvalue
sigma_1 stays above a threshold; pseudo-arclength steps in
X = (psi, alpha, lambda) near folds.  On approach to alpha = 0 the branch is
sampled at fixed alpha = 3, 2, 1 x alpha_tol and the endpoint is obtained by
quadratic extrapolation to alpha = 0.

Derivatives along the branch come from linear solves with the same bordered
Jacobian used by Newton, so they are exact derivatives of the discrete branch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import spectral
from .errors import ContinuationError, SingularLinearizationError, SolverError
from .observables import energy
from .state import Solution, _jacobian, bordered_newton, newton_solve, solve_at_alpha, solve_small_lambda

log = logging.getLogger(__name__)

SIGMA_FRACTION = 0.05
ALPHA_TOL = 1e-3
FOLD_LIMIT = 16
MIN_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class BranchPoint:
    s: float
    lam: float
    solution: Solution
    E: float
    sigma1: float
    nu1: float
    dalpha_dlambda: float
    dE_dlambda: float
    eta: np.ndarray  # d psi / d lambda on the core grid
    w: np.ndarray  # d (lambda psi) / d lambda on the core grid
    spectrum: spectral.Spectrum
    tangent: tuple  # unit (d psi, d alpha, d lambda) / ds in the scaled norm
    fold: bool = False
    transversality: float = np.nan
    kind: str = "natural"

    @property
    def alpha(self):
        return self.solution.alpha

    @property
    def lambda_prime(self):
        return float(self.tangent[2])


@dataclass
class Endpoint:
    """alpha -> 0 limit, extrapolated from the last three fixed-alpha samples."""

    lam: float
    E: float
    s: float
    direct_lam: float = np.nan
    direct_E: float = np.nan


@dataclass
class Branch:
    domain: object
    p: float
    points: list = field(default_factory=list)
    termination: str = ""
    endpoint: Endpoint | None = None
    folds: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    @property
    def lam(self):
        return np.array([pt.lam for pt in self.points])

    @property
    def alpha(self):
        return np.array([pt.alpha for pt in self.points])

    @property
    def E(self):
        return np.array([pt.E for pt in self.points])

    @property
    def sigma1(self):
        return np.array([pt.sigma1 for pt in self.points])


# ------------------------------------------------------------------ derivatives


def _lambda_fixed_row(core):
    return (np.zeros(core.interior.size), 0.0, 1.0)


def tangent(solution):
    """(d alpha / d lambda, eta) with eta = d psi / d lambda on the core grid.

    eta solves -Laplace eta = tau b [eta] + p b [psi]; the slope of alpha is
    then -lambda <eta> - <psi>.
    """
    core = solution.core
    J = _jacobian(core, solution.lam, solution.p, solution.alpha, solution.psi_core[core.interior], _lambda_fixed_row(core))
    rhs = np.zeros(J.shape[0])
    rhs[-1] = 1.0
    try:
        x = spla.splu(J).solve(rhs)
    except RuntimeError as exc:
        raise SingularLinearizationError(str(exc)) from exc
    eta = core.zeros()
    eta[core.interior] = x[:-2]
    dalpha = -solution.lam * solution.mean(eta) - solution.mean(solution.psi_core)
    return dalpha, eta


def tangent_residual(solution, eta):
    """Max-norm residual of -Laplace eta - tau b [eta] - p b [psi] on interior nodes."""
    core = solution.core
    b = solution.weight_core
    r = core.laplacian_apply(eta) - solution.tau * b * solution.fluct(eta) - solution.p * b * solution.fluct(solution.psi_core)
    return float(np.abs(r[core.interior]).max())


def w_derivative(solution):
    """w solving -Laplace w = tau b [w] + rho; returns (w, -<w>)."""
    core = solution.core
    I = core.interior
    beta = core.mass * solution.weight_core[I]
    tau = solution.tau
    A = sp.bmat(
        [
            [core.stiffness - tau * sp.diags(beta), sp.csc_matrix((tau * beta)[:, None])],
            [sp.csc_matrix(beta[None, :]), sp.csc_matrix([[-solution.m]])],
        ],
        format="csc",
    )
    rhs = np.append(core.mass * solution.rho_core[I], 0.0)
    try:
        x = spla.splu(A).solve(rhs)
    except RuntimeError as exc:
        raise SingularLinearizationError(str(exc)) from exc
    w = core.zeros()
    w[I] = x[:-1]
    return w, -solution.mean(w)


def energy_slope_forms(solution, eta):
    """The two expressions for dE/dlambda: int rho eta and the fluctuation form."""
    core = solution.core
    direct = core.integrate(solution.rho_core * eta)
    fpsi = solution.fluct(solution.psi_core)
    feta = solution.fluct(eta)
    split = solution.m * solution.tau * solution.mean(feta * fpsi) + solution.m * solution.p * solution.mean(fpsi * fpsi)
    return direct, split


def energy_slope(solution, eta, rtol=1e-6):
    direct, split = energy_slope_forms(solution, eta)
    if abs(direct - split) > rtol * max(abs(direct), abs(split), 1e-300):
        raise SolverError(f"energy slope forms disagree: {direct!r} vs {split!r}")
    return direct


def fourier_coefficients(solution, spectrum, eta):
    """xi_j = m <[phi_j], [psi]>, beta_j = m <[phi_j], [eta]> for each eigenfunction."""
    dom = solution.domain
    b = solution.weight
    fpsi = dom.weighted_fluctuation(solution.psi, b)
    feta = dom.weighted_fluctuation(dom.lift(eta), b)
    xi, beta = [], []
    for phi in spectrum.eigenfunctions:
        fphi = dom.weighted_fluctuation(phi, b)
        xi.append(solution.m * dom.weighted_mean(fphi * fpsi, b))
        beta.append(solution.m * dom.weighted_mean(fphi * feta, b))
    return np.array(xi), np.array(beta)


def fourier_slope_check(solution, spectrum, eta):
    """max_j |sigma_j beta_j - p xi_j| (should vanish to solver precision)."""
    xi, beta = fourier_coefficients(solution, spectrum, eta)
    return float(np.max(np.abs(spectrum.sigma * beta - solution.p * xi)))


# ------------------------------------------------------------ scaled geometry


class _Metric:
    """Scaled inner product on X = (psi interior, alpha, lambda).

    lambda is measured in units of 1/max(psi_0) so that u = lambda psi is O(1).
    """

    def __init__(self, core):
        self.core = core
        psi0 = core.green_apply(np.ones(core.n_nodes))
        self.ps = float(psi0.max())
        self.wi = core.mass

    def dot(self, a, b):
        return float(self.wi @ (a[0] * b[0]) / self.ps**2 + a[1] * b[1] + (a[2] * b[2]) * self.ps**2)

    def norm(self, a):
        return np.sqrt(self.dot(a, a))

    def row(self, t):
        """Coefficients c with c . X == dot(t, X)."""
        return (self.wi * t[0] / self.ps**2, float(t[1]), float(t[2]) * self.ps**2)

    def unit(self, t):
        n = self.norm(t)
        return (t[0] / n, t[1] / n, t[2] / n)


def _state(sol):
    core = sol.core
    return (sol.psi_core[core.interior].copy(), sol.alpha, sol.lam)


def _arclength_tangent(sol, metric, prev):
    """Unit null vector of the Jacobian in X, oriented along ``prev``."""
    core = sol.core
    c = metric.row(prev)
    J = _jacobian(core, sol.lam, sol.p, sol.alpha, sol.psi_core[core.interior], c)
    rhs = np.zeros(J.shape[0])
    rhs[-1] = 1.0
    try:
        x = spla.splu(J).solve(rhs)
    except RuntimeError as exc:
        raise SingularLinearizationError(str(exc)) from exc
    t = metric.unit((x[:-2], x[-2], x[-1]))
    if metric.dot(t, prev) < 0:
        t = (-t[0], -t[1], -t[2])
    return t


# ---------------------------------------------------------------- branch points


def make_point(sol, s, metric, prev_tangent=None, k=3, m_max=8, kind="natural"):
    dom = sol.domain
    spec = spectral.constrained_eigs(dom, sol, k=k, m_max=m_max)
    E = energy(sol).E
    try:
        dalpha, eta = tangent(sol)
        dE = energy_slope_forms(sol, eta)[0]
        w, _ = w_derivative(sol)
    except SingularLinearizationError:
        dalpha, dE = np.nan, np.nan
        eta = w = np.full(sol.core.n_nodes, np.nan)
    if prev_tangent is None:
        prev_tangent = metric.unit((eta[sol.core.interior], dalpha, 1.0))
    t = _arclength_tangent(sol, metric, prev_tangent)
    return BranchPoint(s, sol.lam, sol, E, spec.sigma1, spec.nu1, dalpha, dE, eta, w, spec, t, kind=kind)


def natural_step(point, dlam, metric=None, **kw):
    """Predictor along (d alpha/d lambda, eta), Newton corrector at lambda + dlam."""
    sol = point.solution
    if dlam == 0:
        return point, 0
    metric = metric or _Metric(sol.core)
    alpha_p = sol.alpha + dlam * point.dalpha_dlambda
    psi_p = sol.psi_core + dlam * point.eta
    new = newton_solve(sol.domain, sol.lam + dlam, sol.p, initial=(alpha_p, psi_p))
    ds = metric.norm(tuple(np.subtract(a, b) for a, b in zip(_state(new), _state(sol))))
    return make_point(new, point.s + ds, metric, point.tangent, **kw), new.iterations


def arclength_step(point, ds, metric=None, **kw):
    """Pseudo-arclength predictor-corrector of length ds along the branch tangent."""
    sol = point.solution
    if ds == 0:
        return point, 0
    metric = metric or _Metric(sol.core)
    t = point.tangent
    x0 = _state(sol)
    xp = (x0[0] + ds * t[0], x0[1] + ds * t[1], x0[2] + ds * t[2])
    c = metric.row(t)
    target = c[0] @ xp[0] + c[1] * xp[1] + c[2] * xp[2]
    psi_p = sol.core.zeros()
    psi_p[sol.core.interior] = xp[0]
    new, its = bordered_newton(sol.domain, sol.p, xp[1], xp[2], psi_p, c, target)
    step = metric.norm(tuple(np.subtract(a, b) for a, b in zip(_state(new), x0)))
    return make_point(new, point.s + step, metric, t, kind="arclength", **kw), its


def _fixed_alpha_point(point, alpha, metric, **kw):
    sol = point.solution
    t = point.tangent
    # move along the tangent until the predicted alpha hits the target
    ds = (alpha - sol.alpha) / t[1] if t[1] != 0 else 0.0
    guess = sol.core.zeros()
    guess[sol.core.interior] = sol.psi_core[sol.core.interior] + ds * t[0]
    start = Solution(sol.domain, sol.lam + ds * t[2], sol.p, alpha, guess)
    new = solve_at_alpha(sol.domain, alpha, sol.p, start)
    step = metric.norm(tuple(np.subtract(a, b) for a, b in zip(_state(new), _state(sol))))
    return make_point(new, point.s + step, metric, t, kind="fixed-alpha", **kw)


def _extrapolate(points):
    a = np.array([pt.alpha for pt in points])
    lam = np.array([pt.lam for pt in points])
    E = np.array([pt.E for pt in points])
    s = np.array([pt.s for pt in points])
    coef = lambda y: np.polyfit(a, y, len(a) - 1)[-1]
    return coef(lam), coef(E), coef(s)


def trace_branch(
    domain,
    p,
    lambda_max=None,
    alpha_tol=ALPHA_TOL,
    sigma_fraction=SIGMA_FRACTION,
    fold_limit=FOLD_LIMIT,
    min_step=MIN_STEP,
    k=3,
    m_max=8,
    max_points=2000,
    max_dalpha=0.02,
    max_slope_change=0.03,
    direct_endpoint=True,
):
    """Trace the positive branch from lambda = 0.

    Stops at ``lambda_max`` (if given) or when alpha reaches ``alpha_tol``,
    whichever comes first.
    """
    core = domain.core
    metric = _Metric(core)
    kw = dict(k=k, m_max=m_max)
    branch = Branch(domain, p, settings=dict(
        lambda_max=lambda_max, alpha_tol=alpha_tol, sigma_fraction=sigma_fraction,
        fold_limit=fold_limit, min_step=min_step, k=k, m_max=m_max,
    ))
    pt = make_point(solve_small_lambda(domain, 0.0, p), 0.0, metric, **kw)
    branch.points.append(pt)
    threshold = sigma_fraction * pt.sigma1
    lam_scale = 1.0 / metric.ps
    dlam = 0.005 * lam_scale
    ds = None
    mode = "natural"

    def fold_check(prev, new):
        if np.sign(prev.lambda_prime) != np.sign(new.lambda_prime):
            i = min((prev, new), key=lambda q: abs(q.sigma1))
            m0 = [j for j, mm in enumerate(i.spectrum.modes) if mm in (None, 0)]
            tr = float(i.spectrum.means[m0[0]]) if m0 else float(i.spectrum.means[0])
            branch.folds.append(dict(lam=i.lam, alpha=i.alpha, s=i.s, sigma1=i.sigma1, transversality=tr,
                                     sign_agree=bool(np.sign(new.sigma1) == np.sign(new.lambda_prime))))
            return True
        return False

    while len(branch.points) < max_points:
        pt = branch.points[-1]
        if lambda_max is not None and pt.lam >= lambda_max * (1 - 1e-12):
            branch.termination = "lambda_max reached"
            return branch
        # headed for alpha = 0 within the next step
        slope = pt.dalpha_dlambda if mode == "natural" else pt.tangent[1] / pt.tangent[2] if pt.tangent[2] else -np.inf
        step_l = dlam if mode == "natural" else (ds or 0) * pt.tangent[2]
        if pt.tangent[1] < 0 and pt.alpha + 1.5 * step_l * slope <= 3 * alpha_tol and (
            lambda_max is None or pt.lam + (3 * alpha_tol - pt.alpha) / slope < lambda_max
        ):
            try:
                tail = []
                cur = pt
                for a in (3 * alpha_tol, 2 * alpha_tol, alpha_tol):
                    if a >= cur.alpha:
                        continue
                    cur = _fixed_alpha_point(cur, a, metric, **kw)
                    tail.append(cur)
            except SolverError as exc:
                log.info("fixed-alpha approach failed: %s", exc)
                tail = None
            if tail:
                branch.points.extend(tail)
                pts = [q for q in branch.points if q.kind == "fixed-alpha"][-3:]
                if len(pts) < 3:
                    pts = branch.points[-3:]
                lam0, E0, s0 = _extrapolate(pts)
                branch.endpoint = Endpoint(float(lam0), float(E0), float(s0))
                if direct_endpoint:
                    try:
                        end = solve_at_alpha(domain, 0.0, p, branch.points[-1].solution)
                        branch.endpoint.direct_lam = end.lam
                        branch.endpoint.direct_E = energy(end).E
                    except SolverError as exc:
                        log.info("direct alpha = 0 solve failed: %s", exc)
                branch.termination = "alpha <= alpha_tol"
                return branch
            # fall through with a smaller step
            dlam *= 0.5
            if ds:
                ds *= 0.5
        try:
            if mode == "natural":
                step = dlam
                if lambda_max is not None:
                    step = min(step, lambda_max - pt.lam)
                new, its = natural_step(pt, step, metric, **kw)
            else:
                new, its = arclength_step(pt, ds, metric, **kw)
        except SolverError as exc:
            branch.settings["last_error"] = str(exc)
            if mode == "natural":
                dlam *= 0.5
                if dlam < min_step:
                    if pt.sigma1 < 2 * threshold:
                        mode, ds = "arclength", 0.5 * metric.norm((pt.eta[core.interior], pt.dalpha_dlambda, 1.0)) * min_step * 64
                        continue
                    branch.termination = "solver failure"
                    return branch
            else:
                ds *= 0.5
                if ds < min_step:
                    branch.termination = "solver failure"
                    return branch
            continue
        if mode == "arclength" and fold_check(pt, new):
            new = BranchPoint(**{**new.__dict__, "fold": True, "transversality": branch.folds[-1]["transversality"]})
            if abs(branch.folds[-1]["transversality"]) < 1e-4:
                branch.points.append(new)
                branch.termination = "solver failure"
                raise ContinuationError("transversality lost at fold")
            if len(branch.folds) > fold_limit:
                branch.points.append(new)
                branch.termination = "fold limit"
                return branch
        branch.points.append(new)
        # step control
        grow = 1.5 if its <= 3 else (1.0 if its <= 5 else 0.5)
        if mode == "natural":
            dlam *= grow
            if np.isfinite(new.dalpha_dlambda) and new.dalpha_dlambda != 0:
                dlam = min(dlam, max_dalpha / abs(new.dalpha_dlambda))
            dlam = min(dlam, 0.1 * lam_scale)
            # keep slopes smooth from point to point so the branch data resolve them
            rel = max(
                abs(new.dalpha_dlambda - pt.dalpha_dlambda) / abs(new.dalpha_dlambda),
                abs(new.dE_dlambda - pt.dE_dlambda) / abs(new.dE_dlambda),
            )
            if np.isfinite(rel) and rel > max_slope_change:
                dlam *= max(0.25, max_slope_change / rel)
            if new.sigma1 < threshold:
                mode = "arclength"
                ds = metric.norm(tuple(np.subtract(a, b) for a, b in zip(_state(new.solution), _state(pt.solution))))
        else:
            ds *= grow
            ds = min(ds, max_dalpha / max(abs(new.tangent[1]), 1e-12))
            if new.sigma1 > threshold and new.lambda_prime > 0:
                mode = "natural"
                dlam = max(min_step, ds * new.lambda_prime)
    branch.termination = "max points"
    return branch
