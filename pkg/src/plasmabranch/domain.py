"""Unit-area domains with discrete Laplacian, Green operator and quadrature.

Every domain stores node values in a flat array that includes the boundary
nodes.  The discrete Laplacian and its inverse act on interior nodes only;
boundary values are always zero.  ``integrate`` is a weighted sum whose
weights add up to the domain area, which is one.

Three geometries are provided:

* ``SquareDomain``: uniform vertex grid on [0,1]^2, five-point stencil,
  trapezoidal weights.
* ``RadialDomain``: radially symmetric functions on the unit-volume ball in
  R^N, finite volumes on a uniform grid r_i = (i - 1/2) h whose last node
  sits on the boundary.
* ``DiskDomain``: polar grid on the unit-area disk.  The radial direction
  uses the ``RadialDomain`` scheme, the angular direction is treated with
  discrete Fourier modes (exact m^2 symbol).
"""
from __future__ import annotations

import re
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import gamma

from .errors import DomainError

MIN_RESOLUTION = 16

DEFAULT_RESOLUTION = {
    "unit-square": 128,
    "unit-disk": (512, 64),
    "radial-ball": 2048,
}


def unit_ball_volume(n):
    return np.pi ** (n / 2) / gamma(n / 2 + 1)


def unit_area_radius(n):
    """Radius of the ball in R^n with unit volume."""
    return unit_ball_volume(n) ** (-1.0 / n)


class Domain:
    """Common interface.  Subclasses set weights, boundary mask and operators."""

    kind: str
    dim: int
    weights: np.ndarray
    boundary: np.ndarray

    @property
    def n_nodes(self):
        return self.weights.size

    @cached_property
    def interior(self):
        return np.flatnonzero(~self.boundary)

    @property
    def area(self):
        return float(self.weights.sum())

    @property
    def core(self):
        """Domain on which radially symmetric (or all) states are solved."""
        return self

    def lift(self, u):
        return u

    def restrict(self, u):
        return u

    def check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_nodes,):
            raise DomainError(
                f"field of shape {u.shape} does not live on {self.kind} with {self.n_nodes} nodes"
            )
        return u

    def zeros(self):
        return np.zeros(self.n_nodes)

    def integrate(self, f):
        return float(self.weights @ self.check(f))

    def weighted_mean(self, f, b):
        f = self.check(f)
        b = self.check(b)
        return float((self.weights * b) @ f / ((self.weights * b).sum()))

    def weighted_fluctuation(self, f, b):
        return self.check(f) - self.weighted_mean(f, b)

    def laplacian_apply(self, u):
        raise NotImplementedError

    def green_apply(self, f):
        raise NotImplementedError

    def dirichlet_energy(self, u):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.kind!r}, resolution={self.resolution!r})"


class SparseDomain(Domain):
    """Domain whose interior stiffness matrix is an explicit sparse matrix.

    ``stiffness`` K satisfies u^T K v ~ int grad u . grad v for fields
    vanishing on the boundary, and ``mass`` holds the interior weights, so
    -Laplace u = f discretizes as K u = mass * f.
    """

    stiffness: sp.csc_matrix

    @cached_property
    def mass(self):
        return self.weights[self.interior]

    @cached_property
    def stiffness_lu(self):
        return spla.splu(sp.csc_matrix(self.stiffness))

    def laplacian_apply(self, u):
        u = self.check(u)
        out = np.zeros_like(u)
        out[self.interior] = self.stiffness @ u[self.interior] / self.mass
        return out

    def green_apply(self, f):
        f = self.check(f)
        out = np.zeros_like(f)
        out[self.interior] = self.stiffness_lu.solve(self.mass * f[self.interior])
        return out

    def dirichlet_energy(self, u):
        ui = self.check(u)[self.interior]
        return 0.5 * float(ui @ (self.stiffness @ ui))

    @cached_property
    def green_sup(self):
        """Largest entry of the discrete Green kernel K^{-1}.

        Any nonnegative density of unit mass produces a stream function
        bounded by this number, which is the a priori sup bound used by the
        Newton safeguard.  The maximum sits on the diagonal near the point
        where the torsion function peaks, so a few diagonal entries there
        suffice.
        """
        t = self.green_apply(np.ones(self.n_nodes))[self.interior]
        cand = np.argsort(t)[-5:]
        best = 0.0
        for c in cand:
            e = np.zeros(self.interior.size)
            e[c] = 1.0
            best = max(best, float(self.stiffness_lu.solve(e)[c]))
        return best


class SquareDomain(SparseDomain):
    def __init__(self, n):
        if n < MIN_RESOLUTION:
            raise DomainError(f"square resolution must be >= {MIN_RESOLUTION}, got {n}")
        self.kind = "unit-square"
        self.dim = 2
        self.resolution = n
        self.n = n
        self.h = h = 1.0 / (n - 1)
        x = np.linspace(0.0, 1.0, n)
        X, Y = np.meshgrid(x, x, indexing="ij")
        self.x = X.ravel()
        self.y = Y.ravel()
        edge = np.ones(n)
        edge[0] = edge[-1] = 0.5
        self.weights = (np.outer(edge, edge) * h * h).ravel()
        b = np.zeros((n, n), dtype=bool)
        b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
        self.boundary = b.ravel()
        m = n - 2
        t = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
        eye = sp.identity(m)
        self.stiffness = sp.csc_matrix(sp.kron(t, eye) + sp.kron(eye, t))

    @property
    def coords(self):
        return np.column_stack([self.x, self.y])

    def grid(self, u):
        return self.check(u).reshape(self.n, self.n)

    def boundary_flux(self, v):
        """Outward flux -int_{boundary} dv/dnu with one-sided second-order differences."""
        g = self.grid(v)
        h = self.h
        edges = [
            (-3 * g[0, :] + 4 * g[1, :] - g[2, :]),
            (-3 * g[-1, :] + 4 * g[-2, :] - g[-3, :]),
            (-3 * g[:, 0] + 4 * g[:, 1] - g[:, 2]),
            (-3 * g[:, -1] + 4 * g[:, -2] - g[:, -3]),
        ]
        tw = np.full(self.n, h)
        tw[0] = tw[-1] = h / 2
        return float(sum(tw @ (e / (2 * h)) for e in edges))


class RadialDomain(SparseDomain):
    """Radially symmetric functions on the unit-volume ball in R^N.

    Nodes r_i = (i - 1/2) h, i = 1..n, with h = R / (n - 1/2) so that the last
    node is the boundary.  Node i < n owns the shell [(i-1)h, ih]; the boundary
    node owns the half shell [(n-1)h, R].  Shell volumes are exact, so the
    weights sum to one to rounding.  There is no node at the origin; values
    there are extrapolated (``value_at_center``).
    """

    def __init__(self, n, dim=2):
        if n < MIN_RESOLUTION:
            raise DomainError(f"radial resolution must be >= {MIN_RESOLUTION}, got {n}")
        if dim < 2:
            raise DomainError(f"ball dimension must be >= 2, got {dim}")
        self.kind = f"radial-ball({dim})"
        self.dim = dim
        self.resolution = n
        self.n = n
        vol = unit_ball_volume(dim)
        self.R = R = unit_area_radius(dim)
        self.h = h = R / (n - 0.5)
        self.r = (np.arange(1, n + 1) - 0.5) * h
        self.r[-1] = R
        faces = np.arange(n) * h
        outer = np.append(faces[1:], R)
        self.weights = vol * (outer**dim - faces**dim)
        self.boundary = np.zeros(n, dtype=bool)
        self.boundary[-1] = True
        # face i sits between node i and node i+1 (1-based), i = 1..n-1
        c = dim * vol * faces[1:] ** (dim - 1) / h
        diag = c.copy()
        diag[1:] += c[:-1]
        self.stiffness = sp.csc_matrix(sp.diags([-c[:-1], diag, -c[:-1]], [-1, 0, 1]))
        self.surface = dim * vol * R ** (dim - 1)

    @property
    def coords(self):
        return self.r[:, None]

    def value_at_center(self, u):
        """Quadratic-in-r^2 extrapolation from the two innermost nodes."""
        u = self.check(u)
        r1, r2 = self.r[0] ** 2, self.r[1] ** 2
        return float((r2 * u[0] - r1 * u[1]) / (r2 - r1))

    def boundary_flux(self, v):
        v = self.check(v)
        dvdr = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * self.h)
        return float(-self.surface * dvdr)


class DiskDomain(Domain):
    """Polar grid on the unit-area disk with Fourier modes in angle.

    Node (i, j) with radius ``core.r[i]`` and angle 2 pi j / n_theta is stored
    at flat index i * n_theta + j.  Angular mode m couples only through the
    radial matrix K_m = K_r + m^2 diag(a_i / r_i^2).
    """

    def __init__(self, n_r, n_theta=64):
        if n_r < MIN_RESOLUTION:
            raise DomainError(f"disk radial resolution must be >= {MIN_RESOLUTION}, got {n_r}")
        if n_theta < 8 or n_theta % 2:
            raise DomainError(f"disk angular resolution must be even and >= 8, got {n_theta}")
        self.kind = "unit-disk"
        self.dim = 2
        self.resolution = (n_r, n_theta)
        self.radial = RadialDomain(n_r, 2)
        self.n_r = n_r
        self.n_theta = n_theta
        self.R = self.radial.R
        self.theta = 2 * np.pi * np.arange(n_theta) / n_theta
        self.weights = np.repeat(self.radial.weights / n_theta, n_theta)
        self.boundary = np.repeat(self.radial.boundary, n_theta)
        self.modes = np.arange(n_theta // 2 + 1)
        ri = self.radial.r[:-1]
        self._angular = self.radial.mass / ri**2

    @property
    def core(self):
        return self.radial

    @property
    def coords(self):
        R, T = np.meshgrid(self.radial.r, self.theta, indexing="ij")
        return np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])

    def grid(self, u):
        return self.check(u).reshape(self.n_r, self.n_theta)

    def lift(self, u):
        return np.repeat(self.radial.check(u), self.n_theta)

    def restrict(self, u):
        return self.grid(u).mean(axis=1)

    def mode_stiffness(self, m):
        return sp.csc_matrix(self.radial.stiffness + m * m * sp.diags(self._angular))

    @cached_property
    def _block_lu(self):
        blocks = [self.mode_stiffness(m) for m in self.modes]
        return spla.splu(sp.csc_matrix(sp.block_diag(blocks)))

    def _modal(self, u):
        return np.fft.rfft(self.grid(u)[:-1], axis=1)

    def _synth(self, coef):
        out = np.zeros((self.n_r, self.n_theta))
        out[:-1] = np.fft.irfft(coef, n=self.n_theta, axis=1)
        return out.ravel()

    def laplacian_apply(self, u):
        c = self._modal(u)
        kc = self.radial.stiffness @ c + np.outer(self._angular, self.modes**2) * c
        return self._synth(kc / self.radial.mass[:, None])

    def green_apply(self, f):
        rhs = self.radial.mass[:, None] * self._modal(f)
        n, nm = rhs.shape
        flat = rhs.T.ravel()
        sol = self._block_lu.solve(np.column_stack([flat.real, flat.imag]))
        coef = (sol[:, 0] + 1j * sol[:, 1]).reshape(nm, n).T
        return self._synth(coef)

    def dirichlet_energy(self, u):
        c = self._modal(u)
        kc = self.radial.stiffness @ c + np.outer(self._angular, self.modes**2) * c
        mult = np.full(self.modes.size, 2.0)
        mult[0] = 1.0
        mult[-1] = 1.0
        q = np.real(np.sum(np.conj(c) * kc, axis=0))
        return 0.5 * float(mult @ q) / self.n_theta**2

    def value_at_center(self, u):
        return self.radial.value_at_center(self.restrict(u))

    def boundary_flux(self, v):
        return self.radial.boundary_flux(self.restrict(v))

    @property
    def green_sup(self):
        return self.radial.green_sup


_BALL = re.compile(r"^radial-ball\((\d+)\)$")


def build_domain(kind, resolution=None, dim=None):
    """Create a domain by name.

    kind: ``"unit-square"``, ``"unit-disk"`` or ``"radial-ball(N)"``
    (``"radial-ball"`` with ``dim=N`` is accepted too).  ``resolution`` is the
    number of nodes per side for the square, ``n_r`` or ``(n_r, n_theta)`` for
    the disk and the number of radial nodes for the ball.
    """
    aliases = {"square": "unit-square", "disk": "unit-disk"}
    kind = aliases.get(kind, kind)
    match = _BALL.match(kind)
    if match:
        dim = int(match.group(1))
        kind = "radial-ball"
    if kind not in DEFAULT_RESOLUTION:
        raise DomainError(f"unsupported domain kind {kind!r}")
    if resolution is None:
        resolution = DEFAULT_RESOLUTION[kind]
    if kind == "unit-square":
        return SquareDomain(int(resolution))
    if kind == "unit-disk":
        if np.ndim(resolution) == 0:
            return DiskDomain(int(resolution))
        n_r, n_t = resolution
        return DiskDomain(int(n_r), int(n_t))
    return RadialDomain(int(resolution), 2 if dim is None else int(dim))
