import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab.fitting import FitError, fit_line


def test_exact_line():
    xs = np.arange(5.0)
    fit = fit_line(zip(xs, -2 * xs + 1))
    assert fit.slope == pytest.approx(-2, abs=1e-12)
    assert fit.intercept == pytest.approx(1, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.n_points == 5


def test_alternating_noise():
    xs = np.arange(5.0)
    ys = -2 * xs + 1 + 0.01 * (-1) ** np.arange(5)
    fit = fit_line(zip(xs, ys))
    assert abs(fit.slope + 2) < 1e-2
    assert fit.r_squared > 0.999


def test_too_few_points():
    with pytest.raises(FitError):
        fit_line([(0, 1), (1, 2)])


def test_equal_abscissae():
    with pytest.raises(FitError):
        fit_line([(1, 1), (1, 2), (1, 3)])


def test_excluded_rows_reported():
    fit = fit_line([(0, 0), (1, 1), (2, 2)], excluded=[(0.5, "horizon_reached")])
    assert fit.to_dict()["excluded"] == [{"row": 0.5, "reason": "horizon_reached"}]


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-5, 5, allow_nan=False),
    st.floats(-5, 5, allow_nan=False),
    st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=20, unique=True),
)
def test_recovers_any_line(a, b, xs):
    xs = np.array(xs)
    if np.ptp(xs) < 1e-3:
        return
    fit = fit_line(zip(xs, a * xs + b))
    assert fit.slope == pytest.approx(a, abs=1e-8)
    assert 0.0 <= fit.r_squared <= 1.0
