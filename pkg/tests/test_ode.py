import math
import warnings

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from blowup_lab import odi
from blowup_lab.fitting import FitError
from blowup_lab.ode import (
    IntegratorControls,
    OdeSpec,
    integrate_blowup,
    make_rhs,
    membership_residuals,
    sweep_ode,
)


def cubic(t, H):
    return 2 * H**3


def test_rhs_is_sum_of_terms():
    spec = OdeSpec("subcritical", A=0.5, p=2.0, n=2, T0=0.125)
    rhs = make_rhs(spec)
    assert rhs(0.1, 3.0) == 0.5  # nonlinear term not active yet
    assert rhs(1.0, 3.0) == pytest.approx(0.5 + 2.0 ** (-3.5) * 9)
    crit = make_rhs(OdeSpec("critical", A=1.0))
    assert crit(np.array([0.0, 1.0]), np.array([1.0, 2.0])) == pytest.approx(
        [1.0, 0.5 + 2.0**-3 / math.log(2) * 4]
    )


def test_subcritical_before_activation_is_quadratic():
    A, T0 = 0.3, 0.5
    res = integrate_blowup(OdeSpec("subcritical", A=A, n=2, T0=T0), horizon=T0)
    assert res.status == "horizon_reached"
    t, H = res.trace["t"], res.trace["H"]
    assert np.allclose(H, A * t**2 / 2, rtol=1e-7, atol=1e-13)


@pytest.mark.parametrize("coord", ["physical", "log"])
def test_critical_before_activation_closed_form(coord):
    A, T0 = 0.7, 1.0
    res = integrate_blowup(OdeSpec("critical", A=A, T0=T0), ctrl=IntegratorControls(time_coordinate=coord), horizon=T0)
    t, H = res.trace["t"], res.trace["H"]
    assert np.allclose(H, A * ((t + 1) * np.log1p(t) - t), rtol=1e-7, atol=1e-12)


def test_cubic_oracle():
    spec = OdeSpec("custom", custom_rhs=cubic)
    res = integrate_blowup(spec, (1.0, 1.0), IntegratorControls(blowup_threshold=1e12))
    assert res.status == "blew_up"
    # H = 1/(1-t) crosses 1e12 at t = 1 - 1e-12
    assert res.t_blow == pytest.approx(1 - 1e-12, abs=1e-6)
    assert np.all(np.diff(res.trace["t"]) > 0)
    assert res.trace["H"][-1] >= 1e12


def test_horizon_reached():
    res = integrate_blowup(OdeSpec("subcritical", A=0.01, n=2), horizon=0.001)
    assert res.status == "horizon_reached"
    assert res.t_blow == pytest.approx(0.001)


def test_max_steps_reports_step_failure():
    res = integrate_blowup(OdeSpec("subcritical", A=1.0, n=2), ctrl=IntegratorControls(max_steps=5))
    assert res.status == "step_failure"


def test_invalid_inputs():
    with pytest.raises(odi.ParameterError):
        integrate_blowup(OdeSpec("subcritical", n=2), horizon=0)
    with pytest.raises(odi.ParameterError):
        integrate_blowup(OdeSpec("custom", custom_rhs=cubic), (math.nan, 0))
    with pytest.raises(odi.ParameterError):
        IntegratorControls(blowup_threshold=1.0)
    with pytest.raises(odi.DomainError):
        OdeSpec("subcritical", p=3.0, n=2)


@pytest.mark.parametrize(
    "spec",
    [OdeSpec("subcritical", A=0.5, n=2), OdeSpec("critical", A=1.0), OdeSpec("subcritical", A=1.0, p=1.5, n=3)],
)
def test_threshold_insensitivity(spec):
    a = integrate_blowup(spec, ctrl=IntegratorControls(blowup_threshold=1e30))
    b = integrate_blowup(spec, ctrl=IntegratorControls(blowup_threshold=1e60))
    assert a.blew_up and b.blew_up
    assert abs(b.t_blow - a.t_blow) / a.t_blow < 0.01
    assert a.diagnostics["threshold_delta"] < 0.01


def test_tolerance_convergence_within_error_estimate():
    spec = OdeSpec("subcritical", A=0.25, n=2)
    a = integrate_blowup(spec, ctrl=IntegratorControls(rel_tol=1e-8, error_estimate=True))
    b = integrate_blowup(spec, ctrl=IntegratorControls(rel_tol=5e-9))
    assert abs(a.t_blow - b.t_blow) <= a.diagnostics["t_blow_error"]


def test_monotone_in_A():
    ts = [integrate_blowup(OdeSpec("subcritical", A=A, n=2)).t_blow for A in (2.0, 1.0, 0.5)]
    assert ts[0] < ts[1] < ts[2]
    ts = [integrate_blowup(OdeSpec("critical", A=A)).t_blow for A in (2.0, 1.0, 0.5)]
    assert ts[0] < ts[1] < ts[2]


@pytest.mark.parametrize("A", [1.0, 0.5])
def test_critical_against_scipy(A):
    # independent route: with H = (1+t) h and s = ln(1+t) the p = 2 model reads
    # h'' + h' = A + 1{s >= s0} h^2 / s; integrate it with LSODA
    s0 = math.log(1.125)

    def f(s, y):
        return [y[1], A + (y[0] ** 2 / s if s >= s0 else 0.0) - y[1]]

    ev = lambda s, y: y[0] * math.exp(s) - 1e30  # noqa: E731
    ev.terminal = True
    sol = solve_ivp(f, [0, 100], [0, 0], events=ev, method="LSODA", rtol=1e-11, atol=1e-14)
    ref = sol.t_events[0][0]
    res = integrate_blowup(OdeSpec("critical", A=A))
    assert math.log1p(res.t_blow) == pytest.approx(ref, rel=1e-6)


def test_one_sided_bounds_and_membership():
    for spec in (OdeSpec("subcritical", A=0.5, n=2), OdeSpec("critical", A=1.0)):
        res = integrate_blowup(spec)
        if spec.variant == "critical":
            assert math.log1p(res.t_blow) <= 1.1 * odi.predict_lifespan_critical(spec.A, spec.p)
        else:
            assert res.t_blow + 1 <= 1.1 * odi.predict_lifespan_subcritical(spec.A, spec.n, spec.p)
        rep = membership_residuals(res, spec)
        assert rep.ok(1e-12)
        assert rep.n_nonlinear_samples > 0


def test_membership_detects_violation():
    spec = OdeSpec("custom", A=1.0, custom_rhs=lambda t, H: 0.0 * t)
    res = integrate_blowup(spec, (0.0, 0.0), horizon=2.0)
    rep = membership_residuals(res, spec, variant="critical")
    assert rep.min_forcing_residual < 0
    assert rep.first_violation_t == pytest.approx(0.0)
    assert not rep.ok(1e-12)


def test_membership_skips_nonlinear_before_T0():
    spec = OdeSpec("critical", A=1.0, T0=5.0)
    res = integrate_blowup(spec, horizon=4.0)
    rep = membership_residuals(res, spec)
    assert rep.n_nonlinear_samples == 0
    assert math.isnan(rep.min_nonlinear_residual)


def test_sweep_needs_three_values():
    with pytest.raises(odi.ParameterError):
        sweep_ode([OdeSpec("critical", A=1.0)])
    with pytest.raises(odi.ParameterError):
        sweep_ode([OdeSpec("critical", A=1.0), OdeSpec("subcritical", n=2), OdeSpec("critical", A=2.0)])


def test_sweep_excludes_non_blowup_rows():
    specs = [OdeSpec("subcritical", A=A, n=2) for A in (1.0, 0.5, 0.25, 0.125)]
    with pytest.warns(UserWarning):
        sw = sweep_ode(specs, horizon=2000.0)
    assert [r.status for r in sw.rows] == ["blew_up", "blew_up", "blew_up", "horizon_reached"]
    assert sw.fit.n_points == 3
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(FitError):
            sweep_ode(specs, horizon=500.0)


def test_parallel_sweep_matches_serial():
    specs = [OdeSpec("critical", A=A) for A in (2.0, 1.0, 0.5)]
    a = sweep_ode(specs, workers=1)
    b = sweep_ode(specs, workers=3)
    assert a.rows == b.rows
    assert a.fit == b.fit
