import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import jn_zeros

from plasmabranch import spectral
from plasmabranch.domain import build_domain
from plasmabranch.errors import DomainError
from plasmabranch.state import newton_solve, solve_small_lambda

DISK = build_domain("unit-disk", (256, 16))
SQ = build_domain("unit-square", 32)
J11 = jn_zeros(1, 1)[0]


def discrete_square_eig(n):
    h = 1.0 / (n - 1)
    return 2 * (4 / h**2) * np.sin(np.pi * h / 2) ** 2


def test_disk_lambda_zero_cluster():
    spec = spectral.constrained_eigs(DISK, solve_small_lambda(DISK, 0.0, 1), k=3)
    np.testing.assert_allclose(spec.sigma, np.pi * J11**2, rtol=1e-4)
    # one radial mode and the cos/sin pair of m = 1
    assert sorted(abs(m) for m in spec.modes) == [0, 1, 1]


def test_square_lambda_zero_nu1_is_dirichlet_eigenvalue():
    spec = spectral.constrained_eigs(SQ, solve_small_lambda(SQ, 0.0, 1), k=2)
    assert spec.nu1 == pytest.approx(discrete_square_eig(32), rel=1e-10)
    assert spec.sigma1 > spec.nu1


@pytest.mark.parametrize("d", [DISK, SQ])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_eigenpairs_satisfy_identities(d, p):
    sol = newton_solve(d, 5.0, p)
    spec = spectral.constrained_eigs(d, sol, k=3)
    for j, phi in enumerate(spec.eigenfunctions):
        sigma = spec.sigma[j]
        kappa = sol.tau + sigma
        b = sol.weight
        assert d.weighted_mean(d.weighted_fluctuation(phi, b) ** 2, b) == pytest.approx(1.0, rel=1e-10)
        assert spec.means[j] >= -1e-12
        if p > 1:
            assert spectral.eigen_identity_residual(sol, phi, sigma) < 1e-9
        # T_0 phi = tau / kappa phi
        t0 = spectral.t0_apply(sol, phi)
        assert np.abs(t0 - sol.tau / kappa * phi).max() < 1e-8 * np.abs(phi).max()
        # A(phi) = m <[phi]^2> sigma / kappa
        A = spectral.second_variation_form(sol, phi)
        assert A == pytest.approx(sol.m * sigma / kappa, rel=1e-8)


def test_check_eigen_identity_wrapper():
    sol = newton_solve(DISK, 5.0, 2)
    spec = spectral.constrained_eigs(DISK, sol, k=1)
    ok, r = spectral.check_eigen_identity(sol, spec, 0)
    assert ok and r < 1e-9


def test_square_eigsh_matches_lobpcg():
    sol = newton_solve(SQ, 8.0, 2)
    spec = spectral.constrained_eigs(SQ, sol, k=1)
    assert spectral.sigma1_lobpcg(SQ, sol) == pytest.approx(spec.sigma1, rel=1e-7)


def test_spectrum_is_deterministic():
    sol = newton_solve(SQ, 3.0, 2)
    a = spectral.constrained_eigs(SQ, sol, k=3)
    b = spectral.constrained_eigs(SQ, sol, k=3)
    np.testing.assert_array_equal(a.sigma, b.sigma)
    np.testing.assert_array_equal(a.phi1, b.phi1)


@settings(max_examples=8, deadline=None)
@given(lam=st.floats(0.0, 5.0), p=st.sampled_from([1, 2, 3]))
def test_projection_raises_eigenvalues(lam, p):
    sol = newton_solve(DISK, lam, p)
    spec = spectral.constrained_eigs(DISK, sol, k=2)
    assert spec.sigma[0] >= spec.nu1 - 1e-9 * abs(spec.nu1)
    assert np.all(np.diff(spec.sigma) >= -1e-9)
    assert sol.tau + spec.sigma1 > 0


def test_spectral_domain_checks():
    ball = build_domain("radial-ball(3)", 32)
    with pytest.raises(DomainError):
        spectral.constrained_eigs(ball, solve_small_lambda(ball, 0.0, 2))
    other = build_domain("unit-square", 32)
    with pytest.raises(DomainError):
        spectral.constrained_eigs(other, solve_small_lambda(SQ, 0.0, 2))
    with pytest.raises(DomainError):
        spectral.sigma1_lobpcg(DISK, solve_small_lambda(DISK, 0.0, 2))


def test_sobolev_t2_is_first_eigenvalue():
    res = spectral.sobolev_constant(SQ, 2.0, tol=1e-12)
    assert res.value == pytest.approx(discrete_square_eig(32), rel=1e-9)
    assert SQ.integrate(res.w**2) == pytest.approx(1.0)


@pytest.mark.parametrize("t", [3.0, 4.0, 6.0])
def test_sobolev_fixed_point_matches_rayleigh_minimum(t):
    d = build_domain("unit-disk", (64, 8))
    fp = spectral.sobolev_constant(d, t).value
    ry = spectral.sobolev_rayleigh(d, t)
    assert ry == pytest.approx(fp, rel=1e-6)


def test_sobolev_decreasing_in_t():
    vals = [spectral.sobolev_constant(SQ, t).value for t in (2.0, 3.0, 4.0, 6.0)]
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(ValueError):
        spectral.sobolev_constant(SQ, 1.5)
