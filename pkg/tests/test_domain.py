import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from plasmabranch.domain import (
    DiskDomain,
    RadialDomain,
    SquareDomain,
    build_domain,
    unit_area_radius,
    unit_ball_volume,
)
from plasmabranch.errors import DomainError

SQ = build_domain("unit-square", 24)
DISK = build_domain("unit-disk", (40, 16))
BALL3 = build_domain("radial-ball(3)", 64)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def interior_field(d, values):
    u = d.zeros()
    u[d.interior] = values[: d.interior.size]
    return u


def test_ball_volumes():
    assert unit_ball_volume(2) == pytest.approx(np.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * np.pi / 3)
    assert unit_area_radius(2) == pytest.approx(1 / np.sqrt(np.pi))


@pytest.mark.parametrize("d", [SQ, DISK, BALL3, build_domain("radial-ball(4)", 32)])
def test_weights_sum_to_one(d):
    assert d.area == pytest.approx(1.0, abs=1e-13)
    assert d.integrate(np.ones(d.n_nodes)) == pytest.approx(1.0, abs=1e-13)


def test_build_domain_names_and_aliases():
    assert isinstance(build_domain("square", 16), SquareDomain)
    assert isinstance(build_domain("disk", 32), DiskDomain)
    assert build_domain("disk", 32).resolution == (32, 64)
    b = build_domain("radial-ball", 20, dim=5)
    assert isinstance(b, RadialDomain) and b.dim == 5


@pytest.mark.parametrize(
    "kind,res",
    [("torus", 32), ("unit-square", 8), ("unit-disk", (32, 7)), ("radial-ball(1)", 32)],
)
def test_build_domain_rejects(kind, res):
    with pytest.raises(DomainError):
        build_domain(kind, res)


def test_check_rejects_wrong_shape():
    with pytest.raises(DomainError, match="does not live"):
        SQ.integrate(np.ones(5))


def test_square_stencil_exact_on_quadratics():
    gx, gy = SQ.x * (1 - SQ.x), SQ.y * (1 - SQ.y)
    lap = SQ.laplacian_apply(gx * gy)
    np.testing.assert_allclose(lap[SQ.interior], (2 * gx + 2 * gy)[SQ.interior], rtol=1e-10)


@pytest.mark.parametrize("d", [SQ, DISK, BALL3])
@settings(max_examples=25, deadline=None)
@given(vals=arrays(float, 2000, elements=finite))
def test_green_inverts_laplacian(d, vals):
    u = interior_field(d, vals)
    back = d.green_apply(d.laplacian_apply(u))
    assert np.abs(back - u).max() <= 1e-9 * (1 + np.abs(u).max())


@pytest.mark.parametrize("d", [SQ, DISK, BALL3])
@settings(max_examples=25, deadline=None)
@given(vals=arrays(float, 2000, elements=finite))
def test_energy_matches_weak_form(d, vals):
    u = interior_field(d, vals)
    lhs = 2 * d.dirichlet_energy(u)
    rhs = d.integrate(u * d.laplacian_apply(u))
    assert lhs >= 0
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(f=arrays(float, SQ.n_nodes, elements=finite), b=arrays(float, SQ.n_nodes, elements=st.floats(0.1, 5)),
       c=st.floats(0.1, 100))
def test_weighted_mean_properties(f, b, c):
    m = SQ.weighted_mean(f, b)
    assert m == pytest.approx(SQ.weighted_mean(f, c * b), rel=1e-12, abs=1e-12)
    assert SQ.weighted_mean(SQ.weighted_fluctuation(f, b), b) == pytest.approx(0, abs=1e-10)
    assert f.min() - 1e-12 <= m <= f.max() + 1e-12


def test_disk_lift_restrict_round_trip():
    v = DISK.radial.zeros()
    v[:-1] = np.cos(DISK.radial.r[:-1])
    np.testing.assert_array_equal(DISK.restrict(DISK.lift(v)), v)


def test_disk_radial_operators_agree_with_radial_grid():
    f = 1 + DISK.radial.r**2
    np.testing.assert_allclose(
        DISK.green_apply(DISK.lift(f)), DISK.lift(DISK.radial.green_apply(f)), atol=1e-14
    )
    u = DISK.radial.green_apply(f)
    assert DISK.dirichlet_energy(DISK.lift(u)) == pytest.approx(DISK.radial.dirichlet_energy(u), rel=1e-12)


@pytest.mark.parametrize("m", [1, 3])
def test_disk_angular_mode_energy(m):
    r = DISK.radial
    v = r.zeros()
    v[:-1] = np.sin(np.pi * r.r[:-1] / r.R) + 0.1
    v[-1] = 0.0
    u = (v[:, None] * np.cos(m * DISK.theta)[None, :]).ravel()
    vi = v[r.interior]
    expected = 0.25 * float(vi @ (DISK.mode_stiffness(m) @ vi))
    assert DISK.dirichlet_energy(u) == pytest.approx(expected, rel=1e-12)


def test_disk_poisson_center_value():
    d = build_domain("unit-disk", (256, 16))
    psi = d.green_apply(np.ones(d.n_nodes))
    assert d.value_at_center(psi) == pytest.approx(1 / (4 * np.pi), rel=1e-4)
    # outward flux equals the total source
    assert d.boundary_flux(psi) == pytest.approx(1.0, rel=1e-3)


def test_square_flux_balances_source():
    d = build_domain("unit-square", 96)
    psi = d.green_apply(np.ones(d.n_nodes))
    assert d.boundary_flux(psi) == pytest.approx(1.0, rel=2e-2)


def test_green_sup_bounds_unit_mass_responses():
    rng = np.random.default_rng(1)
    for d in (SQ, BALL3):
        for _ in range(5):
            f = rng.random(d.n_nodes)
            f /= d.integrate(f)
            assert d.green_apply(f).max() <= d.green_sup * (1 + 1e-12)
