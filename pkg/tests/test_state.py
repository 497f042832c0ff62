import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import j0, j1, jn_zeros

from plasmabranch.domain import build_domain
from plasmabranch.errors import BracketError, NonContractionError, SolverError
from plasmabranch.state import (
    Solution,
    density,
    mass_deficit,
    newton_solve,
    picard_inner_solve,
    solve_at_alpha,
    solve_small_lambda,
    to_free_boundary,
)

DISK = build_domain("unit-disk", (256, 16))
SQ = build_domain("unit-square", 32)
J01 = jn_zeros(0, 1)[0]


def bessel_alpha(lam):
    """Linear case on the unit-area disk: alpha = k J0(kR) / (2 pi R J1(kR)), k^2 = lambda."""
    k, R = np.sqrt(lam), DISK.R
    return k * j0(k * R) / (2 * np.pi * R * j1(k * R))


def test_lambda_zero_is_torsion_state():
    sol = solve_small_lambda(DISK, 0.0, 2)
    assert sol.alpha == 1.0
    np.testing.assert_allclose(sol.psi_core, DISK.core.green_apply(np.ones(DISK.core.n_nodes)))
    assert sol.mass_error < 1e-13


@pytest.mark.parametrize("lam", [1.0, 5.0, 15.0])
def test_linear_case_matches_bessel(lam):
    sol = newton_solve(DISK, lam, 1)
    assert sol.alpha == pytest.approx(bessel_alpha(lam), rel=5e-4)


def test_linear_case_profile_matches_bessel():
    lam = 1.0
    sol = solve_small_lambda(DISK, lam, 1)
    k, R, r = np.sqrt(lam), DISK.R, DISK.core.r
    exact = bessel_alpha(lam) / lam * (j0(k * r) / j0(k * R) - 1)
    assert DISK.core.value_at_center(sol.psi_core) == pytest.approx(exact[0], rel=1e-4)
    assert np.abs(sol.psi_core - exact).max() < 1e-6


@pytest.mark.parametrize("d", [DISK, SQ])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_picard_and_newton_agree(d, p):
    a = solve_small_lambda(d, 1.0, p)
    b = newton_solve(d, 1.0, p)
    assert abs(a.alpha - b.alpha) < 1e-10
    assert np.abs(a.psi_core - b.psi_core).max() < 1e-10


@pytest.mark.parametrize("p", [1, 2.5, 3])
def test_newton_residuals(p):
    sol = newton_solve(SQ, 4.0, p)
    assert sol.residual_norm < 1e-9
    assert sol.mass_error < 1e-12
    assert sol.psi.min() >= 0
    assert 0 < sol.alpha < 1


def test_newton_accepts_initial_guesses():
    a = newton_solve(DISK, 3.0, 2)
    b = newton_solve(DISK, 3.0, 2, initial=a)
    c = newton_solve(DISK, 3.0, 2, initial=(a.alpha, a.psi))
    assert b.alpha == pytest.approx(a.alpha, abs=1e-13)
    assert c.alpha == pytest.approx(a.alpha, abs=1e-13)
    assert b.iterations <= 2


def test_solve_at_alpha_inverts_lambda():
    a = newton_solve(DISK, 6.0, 2)
    b = solve_at_alpha(DISK, a.alpha, 2, newton_solve(DISK, 5.5, 2))
    assert b.lam == pytest.approx(6.0, rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(lam=st.floats(0.05, 2.0), p=st.sampled_from([1, 2, 3]))
def test_small_lambda_state_properties(lam, p):
    sol = solve_small_lambda(SQ, lam, p)
    assert 0 < sol.alpha < 1
    assert sol.mass_error < 1e-12
    assert sol.residual_norm < 1e-9
    assert np.all(sol.psi_core >= 0)
    # larger lambda lowers alpha
    assert solve_small_lambda(SQ, lam * 1.2, p).alpha < sol.alpha


@settings(max_examples=10, deadline=None)
@given(alpha=st.floats(0.05, 1.0))
def test_mass_deficit_increasing_in_alpha(alpha):
    assert mass_deficit(SQ, 2.0, alpha, 2) < mass_deficit(SQ, 2.0, alpha * 1.05, 2)


def test_picard_reports_non_contraction():
    with pytest.raises(NonContractionError):
        picard_inner_solve(DISK, 30.0, 1.0, 1)


def test_small_lambda_fails_past_linear_endpoint():
    with pytest.raises(SolverError):
        solve_small_lambda(DISK, np.pi * J01**2 * 1.2, 1)
    assert issubclass(BracketError, SolverError)


@pytest.mark.parametrize("lam,p", [(-1.0, 2), (np.nan, 2), (1.0, 0.5)])
def test_bad_parameters(lam, p):
    with pytest.raises(ValueError):
        newton_solve(SQ, lam, p)


def test_density_clips_negative_base():
    psi = np.array([-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(density(0.5, 1.0, psi, 2), [0.0, 0.25, 2.25])


def test_solution_derived_quantities():
    sol = newton_solve(SQ, 2.0, 3)
    assert sol.tau == 6.0 and sol.q == 1.5
    assert sol.m == pytest.approx(SQ.integrate(sol.weight))
    assert sol.mean(np.ones(SQ.n_nodes)) == pytest.approx(1.0)
    assert sol.mean(sol.fluct(sol.psi_core)) == pytest.approx(0.0, abs=1e-14)
    assert isinstance(sol, Solution)


def test_free_boundary_view():
    sol = newton_solve(build_domain("unit-disk", (512, 16)), 8.0, 2)
    fb = to_free_boundary(sol)
    assert fb.I == pytest.approx(8.0**2)
    assert fb.gamma == pytest.approx(8.0 * sol.alpha)
    assert fb.v.min() == pytest.approx(fb.gamma)
    assert fb.flux_residual < 1e-4
    with pytest.raises(ValueError):
        to_free_boundary(newton_solve(SQ, 2.0, 1))
    with pytest.raises(ValueError):
        to_free_boundary(solve_small_lambda(SQ, 0.0, 2))
