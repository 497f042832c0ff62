"""Spectral quantities of the linearized operator at a solution.

The constrained eigenproblem is

    -Laplace phi = (tau + sigma) b [phi],   phi = 0 on the boundary,

with tau = p lambda, weight b = (alpha + lambda psi)^(p-1) and [phi] the
fluctuation about the b-weighted mean.  On the grid this is the symmetric
pencil K phi = kappa B_P phi with B_P = diag(w b) - beta beta^T / m and
kappa = tau + sigma.  The standard eigenvalue nu_1 drops the projection.

Eigenfunctions are normalized by <[phi]^2> = 1 and signed so that <phi> >= 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla
from scipy.linalg import eigh, eigh_tridiagonal, solve_banded
from scipy.optimize import minimize

from .domain import DiskDomain, SquareDomain
from .errors import ConvergenceError, DomainError, SolverError


class EigenSolverError(SolverError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    sigma: np.ndarray
    eigenfunctions: list
    modes: list  # signed angular wavenumber on the disk (sin modes negative), None on the square
    means: np.ndarray  # weighted means <phi_j>
    nu1: float
    m: float
    tau: float
    tol: float

    @property
    def sigma1(self):
        return float(self.sigma[0])

    @property
    def phi1(self):
        return self.eigenfunctions[0]


@dataclass(frozen=True, eq=False)
class SobolevResult:
    t: float
    value: float
    w: np.ndarray
    iterations: int


def _interior_weight(solution):
    core = solution.core
    return core.mass * solution.weight_core[core.interior]


def _sign_and_normalize(domain, phi, b):
    mean = domain.weighted_mean(phi, b)
    fl = phi - mean
    norm = np.sqrt(domain.weighted_mean(fl * fl, b))
    phi = phi / norm
    mean /= norm
    scale = np.abs(phi).max()
    if abs(mean) > 1e-9 * scale:
        s = np.sign(mean)
    else:
        idx = np.flatnonzero(np.abs(phi) > 0.5 * scale)[0]
        s = np.sign(phi[idx])
    return s * phi


def _start_vector(n):
    # generic but fixed, so repeated runs are bit-identical; a constant vector
    # would stay in the symmetric subspace of the square
    return np.random.default_rng(20240607).standard_normal(n)


def _sparse_pencil_top(K, lu, apply_b, k, tol):
    n = K.shape[0]
    A = spla.LinearOperator((n, n), matvec=apply_b, dtype=float)
    Minv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    try:
        vals, vecs = spla.eigsh(A, k=k, M=K, Minv=Minv, which="LA", tol=tol, maxiter=20 * n, v0=_start_vector(n))
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(str(exc)) from exc
    order = np.argsort(vals)[::-1]
    return 1.0 / vals[order], vecs[:, order]


def _rel_residual(K, kappa, vec, apply_b):
    r = K @ vec - kappa * apply_b(vec)
    return float(np.linalg.norm(r) / (abs(kappa) * np.linalg.norm(apply_b(vec)) + 1e-300))


def _tridiag_smallest(K, wb, k, polish=2):
    """Smallest k eigenpairs of K v = kappa diag(wb) v for tridiagonal K.

    The symmetric scaling by wb^(-1/2) is poorly conditioned where the weight
    is tiny, so each pair is refined by Rayleigh-quotient inverse iteration
    on the unscaled pencil.
    """
    s = 1.0 / np.sqrt(wb)
    d = K.diagonal() * s * s
    e = K.diagonal(1) * s[:-1] * s[1:]
    vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    vecs = vecs * s[:, None]
    kd, ko = K.diagonal(), K.diagonal(1)
    for j in range(vals.size):
        v, kap = vecs[:, j], vals[j]
        for _ in range(polish):
            ab = np.zeros((3, v.size))
            ab[0, 1:] = ko
            ab[1] = kd - kap * wb
            ab[2, :-1] = ko
            try:
                x = solve_banded((1, 1), ab, wb * v)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(x)):
                break
            v = x / np.sqrt(x @ (wb * x))
            kv = kd * v
            kv[:-1] += ko * v[1:]
            kv[1:] += ko * v[:-1]
            kap = float(v @ kv)
        vecs[:, j], vals[j] = v, kap
    return vals, vecs


def _disk_pairs(domain, solution, k, m_max, projected):
    core = domain.radial
    beta = _interior_weight(solution)
    pairs = []
    for m in range(0, m_max + 1):
        K = domain.mode_stiffness(m)
        if m == 0 and projected:
            A = np.diag(beta) - np.outer(beta, beta) / solution.m
            n = beta.size
            vals, vecs = eigh(A, K.toarray(), subset_by_index=[n - k, n - 1])
            kap = 1.0 / vals[::-1]
            vecs = vecs[:, ::-1]
        else:
            kap, vecs = _tridiag_smallest(K, beta, k)
        for j in range(kap.size):
            pairs.append((kap[j], m, vecs[:, j]))
    pairs.sort(key=lambda t: t[0])
    return pairs, core


def _lift_mode(domain, vec, m, kind):
    full = np.zeros(domain.radial.n_nodes)
    full[:-1] = vec
    ang = np.cos(m * domain.theta) if kind == "c" else np.sin(m * domain.theta)
    return np.outer(full, ang).ravel()


def constrained_eigs(domain, solution, k=3, tol=1e-12, m_max=8, with_nu1=True):
    """Lowest k constrained eigenvalues sigma_j and eigenfunctions."""
    if not isinstance(domain, (SquareDomain, DiskDomain)):
        raise DomainError("spectral quantities are provided for the square and the disk")
    if solution.domain is not domain:
        raise DomainError("solution lives on a different domain")
    tau = solution.tau
    b_full = solution.weight
    if isinstance(domain, SquareDomain):
        K = domain.stiffness
        beta = _interior_weight(solution)
        m = solution.m

        def apply_b(x):
            return beta * x - beta * (beta @ x) / m

        kap, vecs = _sparse_pencil_top(K, domain.stiffness_lu, apply_b, k, tol)
        res = max(_rel_residual(K, kap[j], vecs[:, j], apply_b) for j in range(k))
        funcs = []
        for j in range(k):
            f = domain.zeros()
            f[domain.interior] = vecs[:, j]
            funcs.append(_sign_and_normalize(domain, f, b_full))
        modes = [None] * k
    else:
        pairs, _ = _disk_pairs(domain, solution, k, m_max, projected=True)
        kap, funcs, modes = [], [], []
        for kp, mm, vec in pairs:
            copies = ["c"] if mm == 0 else ["c", "s"]
            for c in copies:
                if len(kap) < k:
                    kap.append(kp)
                    f = _lift_mode(domain, vec, mm, c)
                    funcs.append(_sign_and_normalize(domain, f, b_full))
                    modes.append(mm if c == "c" else -mm)
        kap = np.array(kap)
        res = 1e-13
    kap = np.asarray(kap)
    est = max(res, 1e-13) * float(np.abs(kap).max())
    means = np.array([domain.weighted_mean(f, b_full) for f in funcs])
    nu1 = standard_eig_nu1(domain, solution, tol) if with_nu1 else np.nan
    return Spectrum(kap - tau, funcs, modes, means, nu1, solution.m, tau, est)


def standard_eig_nu1(domain, solution, tol=1e-12):
    """First eigenvalue nu_1 of -Laplace w = (tau + nu) b w."""
    beta = _interior_weight(solution)
    if isinstance(domain, DiskDomain):
        kap, _ = _tridiag_smallest(domain.mode_stiffness(0), beta, 1)
        return float(kap[0] - solution.tau)
    if not isinstance(domain, SquareDomain):
        raise DomainError("spectral quantities are provided for the square and the disk")
    kap, _ = _sparse_pencil_top(domain.stiffness, domain.stiffness_lu, lambda x: beta * x, 1, tol)
    return float(kap[0] - solution.tau)


def eigen_identity_residual(solution, phi, sigma):
    """Residual of (1/m)<phi> = (lambda (p-1) + sigma) <psi [phi]>.

    Scaled by the same expressions with absolute values inside the means, so
    modes with <phi> = 0 (both sides vanish) are measured against O(1).
    """
    dom = solution.domain
    b = solution.weight
    c = solution.lam * (solution.p - 1) + sigma
    fl = dom.weighted_fluctuation(phi, b)
    lhs = dom.weighted_mean(phi, b) / solution.m
    rhs = c * dom.weighted_mean(solution.psi * fl, b)
    scale = dom.weighted_mean(np.abs(phi), b) / solution.m + abs(c) * dom.weighted_mean(np.abs(solution.psi * fl), b)
    return abs(lhs - rhs) / scale


def check_eigen_identity(solution, spectrum, j=0, tol=1e-7):
    r = eigen_identity_residual(solution, spectrum.eigenfunctions[j], spectrum.sigma[j])
    return r <= tol, r


def t0_apply(solution, f):
    """T_0 f = tau G[b [f]]; its eigenvalues are tau / (tau + sigma_j)."""
    dom = solution.domain
    b = solution.weight
    return solution.tau * dom.green_apply(b * dom.weighted_fluctuation(f, b))


def second_variation_form(solution, phi):
    """A(phi) = int b [phi]^2 - tau int b [phi] G[b [phi]]."""
    dom = solution.domain
    b = solution.weight
    fl = dom.weighted_fluctuation(phi, b)
    bf = b * fl
    return dom.integrate(bf * fl) - solution.tau * dom.integrate(bf * dom.green_apply(bf))


def sobolev_constant(domain, t, tol=1e-10, max_iter=5000):
    """Best constant in ||grad w||_2^2 >= Lambda ||w||_t^2 via the Lane-Emden fixed point.

    Iterates w <- G[w^(t-1)] normalized to int w^t = 1 (for t = 2 this is
    inverse iteration for the first Dirichlet eigenvalue).  On the disk the
    minimizer is radial and the iteration runs on the radial sub-grid.
    """
    if t < 2:
        raise ValueError("t must be >= 2")
    core = domain.core
    w = core.green_apply(np.ones(core.n_nodes))
    w /= core.integrate(w**t) ** (1.0 / t)
    for it in range(1, max_iter + 1):
        new = core.green_apply(w ** (t - 1))
        new /= core.integrate(new**t) ** (1.0 / t)
        d = float(np.abs(new - w).max())
        w = new
        if d <= tol * float(w.max()):
            break
    else:
        raise ConvergenceError(f"Lane-Emden iteration did not converge in {max_iter} steps")
    value = 2.0 * core.dirichlet_energy(w)
    return SobolevResult(float(t), value, domain.lift(w), it)


def sobolev_rayleigh(domain, t, x0=None):
    """Direct minimization of the Sobolev quotient with L-BFGS (cross-check)."""
    core = domain.core
    K = core.stiffness
    a = core.mass
    n = a.size
    if x0 is None:
        x0 = np.ones(n)

    def f(x):
        y = np.abs(x)
        kx = K @ x
        num = x @ kx
        s = a @ y**t
        den = s ** (2.0 / t)
        g = 2 * kx / den - num * (2.0 / t) * s ** (2.0 / t - 1) * t * a * y ** (t - 1) * np.sign(x) / den**2
        return num / den, g

    res = minimize(f, x0, jac=True, method="L-BFGS-B", options={"maxiter": 50000, "ftol": 1e-15, "gtol": 1e-12})
    return float(res.fun)


def sigma1_lobpcg(domain, solution, tol=1e-10):
    """sigma_1 from LOBPCG on the square (an eigensolver independent of ARPACK).

    Finds the largest eigenvalue 1/kappa of B_P x = (1/kappa) K x.
    """
    if not isinstance(domain, SquareDomain):
        raise DomainError("lobpcg cross-check is implemented for the square")
    beta = _interior_weight(solution)
    m = solution.m
    n = beta.size
    K = domain.stiffness
    lu = domain.stiffness_lu
    def apply_b(x):
        x = np.ravel(x)
        return beta * x - beta * (beta @ x) / m

    A = spla.LinearOperator((n, n), matvec=apply_b, dtype=float)
    prec = spla.LinearOperator((n, n), matvec=lambda x: lu.solve(np.ravel(x)), dtype=float)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, 3))
    vals, _ = spla.lobpcg(A, X, B=K, M=prec, largest=True, tol=tol, maxiter=500)
    return float(1.0 / vals.max() - solution.tau)
