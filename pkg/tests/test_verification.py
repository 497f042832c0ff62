import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plasmabranch import errors
from plasmabranch import verification as V


def test_exact_ball_torsion_in_the_plane():
    assert V.exact_ball_torsion(2) == pytest.approx(1 / (16 * np.pi))


@given(n=st.integers(2, 8))
def test_exact_ball_torsion_integral(n):
    # 1/2 int_B (R^2 - r^2)/(2n) dx on the unit-volume ball, by quadrature in r
    R = V.unit_area_radius(n)
    r = np.linspace(0, R, 20001)
    shell = n * V.unit_ball_volume(n) * r ** (n - 1)
    val = 0.5 * np.trapezoid((R**2 - r**2) / (2 * n) * shell, r)
    assert V.exact_ball_torsion(n) == pytest.approx(val, rel=1e-7)


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3),
       h=st.lists(st.floats(0.01, 1), min_size=2, max_size=2))
def test_centered_slope_exact_for_quadratics(a, b, c, h):
    x = np.cumsum([0.0] + h)
    y = a + b * x + c * x**2
    assert V.centered_slope(x, y, 1) == pytest.approx(b + 2 * c * x[1], abs=1e-8)


def test_order_treats_rounding_level_as_converged():
    assert V._order([4e-4, 1e-4, 2.5e-5], 1e-12) == pytest.approx([4, 4])
    assert V._order([1e-6, 1e-15], 1e-12) == [np.inf]


def test_record_line_and_dict():
    rec = V.Record(5, "claim", 1.0, np.float64(1.5), "1%", False, note="why")
    assert rec.line() == "criterion  5 FAIL: claim [why]"
    d = rec.as_dict()
    assert d["pass"] is False and isinstance(d["measured"], float)
    assert V._jsonable({1: np.nan}) == {"1": "nan"}


def test_error_hierarchy():
    for cls in (errors.NonContractionError, errors.BracketError, errors.SingularLinearizationError,
                errors.PositivityLossError, errors.ConvergenceError, errors.BoundViolationError,
                errors.ContinuationError):
        assert issubclass(cls, errors.SolverError)
    assert issubclass(errors.DomainError, ValueError)
