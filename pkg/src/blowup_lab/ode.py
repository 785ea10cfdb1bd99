"""Blow-up detecting integration of the equality models of the two ODI systems.

The equality model puts the forcing term and the (activated) nonlinear term
together on the right-hand side,

    H'' = forcing(t) + 1{t >= T0} * kernel(t) * H^p,

so any solution satisfies both differential inequalities at once.  Integration uses a
Dormand-Prince 5(4) pair with a PI step-size controller.  Critical runs default
to the logarithmic time coordinate s = ln(1 + t), in which

    H_ss = H_s + e^{2s} * rhs(e^s - 1, H),

because their blow-up times are far too large for uniform physical stepping.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import brentq

from . import odi
from .fitting import FitError, FitResult, fit_line

__all__ = [
    "OdeSpec",
    "IntegratorControls",
    "BlowupResult",
    "MembershipReport",
    "SweepRow",
    "OdeSweep",
    "make_rhs",
    "integrate_blowup",
    "membership_residuals",
    "default_horizon",
    "sweep_ode",
]

log = logging.getLogger(__name__)

Variant = Literal["critical", "subcritical", "custom"]

H_OVERFLOW = 1e300
TRACE_MAX = 4096

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True)
class OdeSpec:
    variant: Variant
    A: float = 1.0
    p: float = 2.0
    n: int | None = None
    T0: float = 0.125
    custom_rhs: Callable[[float, float], float] | None = None

    def __post_init__(self):
        if self.variant == "critical":
            odi.CriticalOdiParams(self.A, self.p, self.T0)
        elif self.variant == "subcritical":
            if self.n is None:
                raise odi.DomainError("subcritical spec needs the dimension n")
            odi.SubcriticalOdiParams(self.A, self.p, self.n, self.T0)
        elif self.variant == "custom":
            if self.custom_rhs is None:
                raise odi.DomainError("custom spec needs custom_rhs")
        else:
            raise odi.DomainError(f"unknown variant {self.variant!r}")


@dataclass(frozen=True)
class IntegratorControls:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    blowup_threshold: float = 1e30
    max_steps: int = 200_000
    time_coordinate: Literal["physical", "log"] | None = None  # None: variant default
    error_estimate: bool = False  # rerun at 10x rel_tol to estimate the t_blow error

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise odi.ParameterError("tolerances must be positive")
        if not self.blowup_threshold > 1:
            raise odi.ParameterError("blow-up threshold must exceed 1")
        if self.max_steps < 1:
            raise odi.ParameterError("max_steps must be positive")


@dataclass(frozen=True)
class BlowupResult:
    status: Literal["blew_up", "horizon_reached", "step_failure"]
    t_blow: float  # crossing time if blew_up, else the last time reached
    ln_t_blow: float
    trace: dict | None  # arrays "t", "H", "dH"
    diagnostics: dict = field(default_factory=dict)

    @property
    def blew_up(self) -> bool:
        return self.status == "blew_up"


def make_rhs(spec: OdeSpec) -> Callable:
    """Physical-time right-hand side (t, H) -> H''.  Accepts scalars or arrays."""
    if spec.variant == "custom":
        return spec.custom_rhs
    A, p, T0 = spec.A, spec.p, spec.T0
    if spec.variant == "critical":

        def rhs(t, H):
            t = np.asarray(t, dtype=float)
            H = np.asarray(H, dtype=float)
            lt = np.log1p(t)
            on = t >= T0
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                kern = np.where(on, (t + 1) ** (-(p + 1)) * np.where(on, lt, 1.0) ** (-(p - 1)), 0.0)
                out = A / (t + 1) + kern * np.abs(H) ** p
            return out[()] if out.ndim == 0 else out

    else:
        n = spec.n
        expo = -(n + 3) * p / 2 + (n + 1) / 2

        def rhs(t, H):
            t = np.asarray(t, dtype=float)
            H = np.asarray(H, dtype=float)
            with np.errstate(over="ignore"):
                kern = np.where(t >= T0, (t + 1) ** expo, 0.0)
                out = A + kern * np.abs(H) ** p
            return out[()] if out.ndim == 0 else out

    return rhs


def _forcing(spec: OdeSpec, t):
    if spec.variant == "critical":
        return spec.A / (t + 1)
    return spec.A + 0.0 * t


def _kernel(spec: OdeSpec, t):
    if spec.variant == "critical":
        return (t + 1) ** (-(spec.p + 1)) * np.log1p(t) ** (-(spec.p - 1))
    n, p = spec.n, spec.p
    return (t + 1) ** (-(n + 3) * p / 2 + (n + 1) / 2)


def _first_order(spec: OdeSpec, coord: str) -> Callable:
    """System y' = F(x, y), y = (H, dH/dx), in the chosen time coordinate."""
    rhs = make_rhs(spec)
    if coord == "physical":
        return lambda t, y: np.array([y[1], float(rhs(t, y[0]))])

    if spec.variant == "critical":
        A, p, s0 = spec.A, spec.p, math.log1p(spec.T0)

        def F(s, y):
            # e^{2s} * rhs(e^s - 1, H), expanded to avoid overflow of e^{2s}
            val = A * math.exp(s)
            if s >= s0:
                val += math.exp((1 - p) * s) * s ** (1 - p) * abs(y[0]) ** p
            return np.array([y[1], y[1] + val])

        return F

    if spec.variant == "subcritical":
        A, p, n, s0 = spec.A, spec.p, spec.n, math.log1p(spec.T0)
        expo = -(n + 3) * p / 2 + (n + 1) / 2

        def F(s, y):
            val = A * math.exp(2 * s)
            if s >= s0:
                val += math.exp((2 + expo) * s) * abs(y[0]) ** p
            return np.array([y[1], y[1] + val])

        return F

    def F(s, y):
        return np.array([y[1], y[1] + math.exp(2 * s) * float(rhs(math.expm1(s), y[0]))])

    return F


def _dopri_step(F, x, y, h, k1):
    k = [k1]
    for i in range(1, 7):
        yi = y + h * sum(a * kj for a, kj in zip(_A[i], k))
        k.append(F(x + _C[i] * h, yi))
    y_new = y + h * sum(b * kj for b, kj in zip(_B, k) if b != 0.0)
    err = h * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
    return y_new, err, k[6]


def _downsample(t, cols, max_n=TRACE_MAX):
    t = np.asarray(t)
    if len(t) <= max_n:
        return t, [np.asarray(c) for c in cols]
    lg = np.log1p(t)
    targets = np.linspace(lg[0], lg[-1], max_n)
    idx = np.unique(np.clip(np.searchsorted(lg, targets), 0, len(t) - 1))
    idx = np.union1d(idx, [0, len(t) - 1])
    return t[idx], [np.asarray(c)[idx] for c in cols]


def _to_physical(x, coord):
    return math.expm1(x) if coord == "log" else x


def _ln_t(x, coord):
    if coord == "log":
        # ln(e^s - 1) without overflow for large s
        return x + math.log(-math.expm1(-x)) if x > 0 else -math.inf
    return math.log(x) if x > 0 else -math.inf


def _initial_step(F, x, y, k1, rtol, atol, span):
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h, 0.1 * span, 1e-2)


class _Stepper:
    """Adaptive DOPRI5 march with PI control; owns step statistics."""

    def __init__(self, rtol, atol, max_steps):
        self.rtol, self.atol, self.max_steps = rtol, atol, max_steps
        self.steps = self.rejected = 0
        self.h = math.nan

    def march(self, F, x, y, x_stop, breaks=(), watch=None, stop=None, record=None):
        """Integrate y' = F(x, y) from x towards x_stop.

        ``watch`` lists component-0 levels whose first crossings are located
        by root finding inside the accepted step; ``stop(y)`` ends the march
        after an accepted step.  Returns (x, y, crossings, status) with status
        in {"done", "stopped", "crossed", "failed"}.
        """
        watch = list(watch or [])
        crossings = []
        k1 = F(x, y)
        h = _initial_step(F, x, y, k1, self.rtol, self.atol, x_stop - x)
        err_prev = 1e-4
        tiny = 16 * np.finfo(float).eps
        while True:
            if x >= x_stop:
                return x, y, crossings, "done"
            if self.steps >= self.max_steps:
                log.warning("max_steps=%d exhausted at x=%g", self.max_steps, x)
                return x, y, crossings, "failed"
            target = x_stop
            for xb in breaks:
                if x < xb < target:
                    target = xb
            h = min(h, target - x)
            if h <= tiny * max(1.0, abs(x)):
                return x, y, crossings, "failed"
            with np.errstate(over="ignore", invalid="ignore"):
                y_new, err, k7 = _dopri_step(F, x, y, h, k1)
                sc = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
                en = float(np.sqrt(np.mean((err / sc) ** 2)))
            if not (np.all(np.isfinite(y_new)) and abs(y_new[0]) <= H_OVERFLOW and math.isfinite(en)):
                self.rejected += 1
                h *= 0.2
                continue
            if en > 1.0:
                self.rejected += 1
                h *= max(0.2, 0.9 * en ** (-0.2))
                continue
            while watch and y[0] < watch[0] <= y_new[0]:
                lev = watch.pop(0)
                g = lambda hh: _dopri_step(F, x, y, hh, k1)[0][0] - lev
                hc = brentq(g, 0.0, h, xtol=1e-14 * max(1.0, abs(x)), rtol=4 * np.finfo(float).eps)
                crossings.append(x + hc)
            x_old = x
            x, y, k1 = x + h, y_new, k7
            if x_old < target <= x + 1e-15 * max(1.0, abs(x)):
                x = target
                k1 = F(x, y)  # rhs may jump at the activation time
            self.steps += 1
            self.h = h
            if record is not None:
                record(x, y)
            if crossings and not watch:
                return x, y, crossings, "crossed"
            if stop is not None and stop(y):
                return x, y, crossings, "stopped"
            fac = 0.9 * max(en, 1e-10) ** (-0.7 / 5) * err_prev ** (0.4 / 5)
            h *= min(5.0, max(0.2, fac))
            err_prev = max(en, 1e-4)


def _run(spec: OdeSpec, init, ctrl: IntegratorControls, horizon: float, coord: str):
    F = _first_order(spec, coord)
    x = 0.0
    # dH/ds = (1 + t) dH/dt = dH/dt at t = 0
    y = np.array([float(init[0]), float(init[1])])
    x_end = math.log1p(horizon) if coord == "log" else horizon
    breaks = []
    if spec.variant != "custom":
        xb = math.log1p(spec.T0) if coord == "log" else spec.T0
        if 0 < xb < x_end:
            breaks.append(xb)

    thr1 = ctrl.blowup_threshold
    thr2 = min(thr1**2, H_OVERFLOW / 10)
    h_switch = min(1e6, thr1 / 10)
    ts, Hs, dHs = [x], [y[0]], [y[1]]

    def rec(xx, yy):
        ts.append(xx)
        Hs.append(yy[0])
        dHs.append(yy[1])

    st = _Stepper(ctrl.rel_tol, ctrl.abs_tol, ctrl.max_steps)
    # phase 1: march in x until H is large and increasing
    x, y, crossings, how = st.march(
        F, x, y, x_end, breaks, watch=[thr1, thr2],
        stop=lambda yy: yy[0] >= h_switch and yy[1] > 0, record=rec,
    )
    status = {"done": "horizon_reached", "failed": "step_failure"}.get(how, "blew_up")
    reached_high = len(crossings) == 2

    if how == "stopped":
        # phase 2: independent variable xi = ln H, state (x, ln H_x); steps
        # stay bounded while H runs off to infinity, so crossings are exact
        def G(xi, z):
            Hx = math.exp(z[1])
            acc = F(z[0], np.array([math.exp(xi), Hx]))[1]
            dx = math.exp(xi - z[1])
            return np.array([dx, acc / Hx * dx])

        def rec2(xi, z):
            if z[0] > ts[-1]:
                rec(z[0], np.array([math.exp(xi), math.exp(z[1])]))

        xi, z = math.log(y[0]), np.array([x, math.log(y[1])])
        past_end = lambda zz: zz[0] >= x_end
        status = "step_failure"
        for lev in (thr1, thr2)[len(crossings):]:
            if math.log(lev) <= xi:
                crossings.append(z[0])
                continue
            xi, z, _, how = st.march(G, xi, z, math.log(lev), stop=past_end, record=rec2)
            if how != "done" or not z[0] <= x_end:
                break
            crossings.append(z[0])
        x = z[0]
        if crossings:
            status = "blew_up"
        elif how == "stopped":
            status = "horizon_reached"
            x = x_end
        reached_high = len(crossings) == 2

    x_report = crossings[0] if crossings else min(x, x_end)
    t_report = _to_physical(x_report, coord)
    ln_t = _ln_t(x_report, coord)

    xs = np.asarray(ts)
    t_phys = np.expm1(xs) if coord == "log" else xs
    dH = np.asarray(dHs) * (np.exp(-xs) if coord == "log" else 1.0)
    t_tr, (H_tr, dH_tr) = _downsample(t_phys, [Hs, dH])

    delta = math.nan
    t_high = math.nan
    if crossings:
        # without the second crossing the last reached time is an upper estimate
        x_high = crossings[1] if reached_high else max(x, crossings[0])
        t_high = _to_physical(x_high, coord)
        delta = (t_high - t_report) / t_report if t_report > 0 else math.nan
    diag = {
        "steps": st.steps,
        "rejected": st.rejected,
        "final_step": st.h,
        "coordinate": coord,
        "threshold": thr1,
        "threshold_high": thr2,
        "t_blow_high": t_high,
        "threshold_delta": delta,
        "threshold_high_reached": reached_high,
    }
    trace = {"t": t_tr, "H": H_tr, "dH": dH_tr}
    return BlowupResult(status, t_report, ln_t, trace, diag)


def integrate_blowup(
    spec: OdeSpec,
    init=(0.0, 0.0),
    ctrl: IntegratorControls | None = None,
    horizon: float | None = None,
) -> BlowupResult:
    """Integrate the model from t = 0 until H crosses the blow-up threshold.

    Reports status ``blew_up`` with the first crossing time, ``horizon_reached``
    when the horizon is attained below threshold, or ``step_failure`` when the
    step size underflows or ``max_steps`` is exhausted.  The run continues past
    the first crossing to ``threshold**2`` so that the threshold sensitivity
    ``diagnostics["threshold_delta"]`` is available.
    """
    ctrl = ctrl or IntegratorControls()
    if horizon is None:
        horizon = default_horizon(spec)
    if not horizon > 0:
        raise odi.ParameterError("horizon must be positive")
    if not all(math.isfinite(v) for v in init):
        raise odi.ParameterError("initial data must be finite")
    coord = ctrl.time_coordinate or ("log" if spec.variant == "critical" else "physical")
    res = _run(spec, init, ctrl, horizon, coord)
    if ctrl.error_estimate and res.blew_up:
        coarse = _run(spec, init, replace(ctrl, rel_tol=ctrl.rel_tol * 10), horizon, coord)
        err = abs(coarse.t_blow - res.t_blow) if coarse.blew_up else math.inf
        res.diagnostics["t_blow_error"] = err
    return res


def default_horizon(spec: OdeSpec) -> float:
    """Ten times the predicted bound for class models; 1e6 for custom models."""
    if spec.variant == "subcritical":
        return 10 * odi.predict_lifespan_subcritical(spec.A, spec.n, spec.p)
    if spec.variant == "critical":
        lnb = odi.predict_lifespan_critical(spec.A, spec.p)
        return math.exp(min(700.0, 10 * lnb))
    return 1e6


@dataclass(frozen=True)
class MembershipReport:
    min_forcing_residual: float
    min_nonlinear_residual: float  # nan if no sample has t >= T0
    n_samples: int
    n_nonlinear_samples: int
    first_violation_t: float | None

    def ok(self, tol: float) -> bool:
        vals = [self.min_forcing_residual]
        if self.n_nonlinear_samples:
            vals.append(self.min_nonlinear_residual)
        return all(v >= -tol for v in vals)


def membership_residuals(
    result: BlowupResult,
    spec: OdeSpec,
    variant: Literal["critical", "subcritical"] | None = None,
) -> MembershipReport:
    """H'' minus each class lower bound at every trace sample.

    Residuals are divided by max(1, |H''|) so that rounding of the huge terms
    near blow-up is not mistaken for a violation; negative values still flag a
    genuine failure of an inequality.  The forcing inequality applies for all
    t, the nonlinear one only for t >= T0.  For custom specs ``variant`` selects
    which pair of inequalities (and ``spec.A``, ``spec.p``, ``spec.n``,
    ``spec.T0``) to test against.
    """
    if result.trace is None:
        raise odi.ParameterError("result carries no trace")
    variant = variant or spec.variant
    if variant not in ("critical", "subcritical"):
        raise odi.ParameterError("membership needs the critical or subcritical variant")
    ref = OdeSpec(variant, spec.A, spec.p, spec.n, spec.T0)
    t = np.asarray(result.trace["t"], dtype=float)
    H = np.asarray(result.trace["H"], dtype=float)
    keep = np.abs(H) < H_OVERFLOW ** (1 / max(spec.p, 1.0))
    t, H = t[keep], H[keep]
    rhs = make_rhs(spec)
    Hpp = np.array([float(rhs(ti, hi)) for ti, hi in zip(t, H)])
    scale = np.maximum(1.0, np.abs(Hpp))
    res_f = (Hpp - _forcing(ref, t)) / scale
    on = t >= spec.T0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        res_n = (Hpp[on] - _kernel(ref, t[on]) * np.abs(H[on]) ** spec.p) / scale[on]
    bad_f = t[res_f < 0]
    bad_n = t[on][res_n < 0]
    first = None
    if bad_f.size or bad_n.size:
        first = float(min(np.min(bad_f, initial=math.inf), np.min(bad_n, initial=math.inf)))
    return MembershipReport(
        float(np.min(res_f)),
        float(np.min(res_n)) if res_n.size else math.nan,
        int(t.size),
        int(res_n.size),
        first,
    )


@dataclass(frozen=True)
class SweepRow:
    variant: str
    n: int | None
    p: float
    A: float
    T0: float
    t_blow: float
    ln_t_blow: float
    status: str
    product: float  # critical: ln(t_blow) A^{p-1}; subcritical: (t_blow+1) A^{2(p-1)/(2-(n-1)(p-1))}
    bound: float  # predicted bound: ln(T+1) (critical) or T+1 (subcritical)


@dataclass(frozen=True)
class OdeSweep:
    rows: tuple[SweepRow, ...]
    fit: FitResult
    target_slope: float
    products_nondecreasing: bool  # as A decreases

    @property
    def products(self) -> list[float]:
        return [r.product for r in self.rows if r.status == "blew_up"]


def _sweep_member(args):
    spec, ctrl, horizon = args
    return integrate_blowup(spec, (0.0, 0.0), ctrl, horizon)


def sweep_ode(
    specs: Sequence[OdeSpec],
    ctrl: IntegratorControls | None = None,
    horizon: float | None = None,
    workers: int = 1,
) -> OdeSweep:
    """Blow-up times across an A ladder plus the scaling fit.

    Subcritical: slope of ln t_blow against ln A (target -2(p-1)/(2-(n-1)(p-1))).
    Critical: slope of ln t_blow against A^{-(p-1)} (target: the remark bound),
    plus the product sequence ln(t_blow) A^{p-1}.
    """
    specs = list(specs)
    if len(specs) < 3:
        raise odi.ParameterError("a sweep needs at least 3 A values")
    variants = {s.variant for s in specs}
    if len(variants) != 1 or "custom" in variants:
        raise odi.ParameterError("sweep members must share one ODI variant")
    variant = variants.pop()
    ctrl = ctrl or IntegratorControls()
    jobs = [(s, ctrl, horizon) for s in specs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_member, jobs))
    else:
        results = [_sweep_member(j) for j in jobs]

    rows, pts, excluded = [], [], []
    for spec, res in zip(specs, results):
        p = spec.p
        if variant == "critical":
            bound = odi.predict_lifespan_critical(spec.A, p)
            product = res.ln_t_blow * spec.A ** (p - 1)
        else:
            bound = odi.predict_lifespan_subcritical(spec.A, spec.n, p)
            product = (res.t_blow + 1) * spec.A ** odi.subcritical_exponent(spec.n, p)
        row = SweepRow(variant, spec.n, p, spec.A, spec.T0, res.t_blow, res.ln_t_blow, res.status, product, bound)
        rows.append(row)
        if not res.blew_up:
            excluded.append((spec.A, res.status))
            warnings.warn(f"A={spec.A}: no blow-up ({res.status}); excluded from fit", stacklevel=2)
            continue
        if variant == "critical":
            pts.append((spec.A ** (-(p - 1)), res.ln_t_blow))
        else:
            pts.append((math.log(spec.A), res.ln_t_blow))

    if len(pts) < 3:
        raise FitError(f"only {len(pts)} usable rows")
    fit = fit_line(pts, excluded)
    p = specs[0].p
    if variant == "critical":
        target = 1 / odi.sharp_constants(2, p).c_tilde_crit ** (p - 1)
    else:
        target = -odi.subcritical_exponent(specs[0].n, p)
    ok_rows = sorted((r for r in rows if r.status == "blew_up"), key=lambda r: -r.A)
    prods = [r.product for r in ok_rows]
    nondecreasing = all(b >= a for a, b in zip(prods, prods[1:]))
    return OdeSweep(tuple(rows), fit, target, nondecreasing)
