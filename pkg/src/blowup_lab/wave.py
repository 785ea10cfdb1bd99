"""Radial method-of-lines solver for u_tt = u_rr + (n-1)/r u_r + |u_r|^p.

Space: centered differences on a uniform grid 0..r_max, with the symmetric
ghost value at the origin where the operator becomes n * u_rr.  Time: classical
RK4 on (u, v = u_t) with dt = cfl * dr, shrunk further when the gradient is
large so that the Riccati-like growth of u_r is resolved near blow-up.

Only nodes inside the light cone r <= t + R (plus a few cells) are updated.
An optional trailing window also freezes nodes far behind the outgoing front;
for data supported near the front this is exact up to the frozen region and
cuts the cost of a run from O(T^2) to O(T).
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from . import _kernels as K
from . import odi
from .fitting import FitError, FitResult, fit_line

__all__ = [
    "DataError",
    "DataProfile",
    "WaveConfig",
    "RadialField",
    "LifespanEstimate",
    "PdeSweep",
    "make_initial_data",
    "step",
    "evolve",
    "detect_lifespan",
    "pde_sweep",
    "support_radius",
    "discrete_energy",
    "write_field_csv",
    "read_field_csv",
    "save_snapshots",
    "load_snapshots",
]

log = logging.getLogger(__name__)

# time-step limits near blow-up: dt <= DT_GROWTH / a and dt <= DT_MIXED * sqrt(dr / a)
# with a = p * max|u_r|^(p-1) the local growth rate of the gradient
DT_GROWTH = 0.05
DT_MIXED = 0.5
# Active cells ahead of the light cone: CONE_MARGIN + CONE_SPREAD * (t/dr)^(1/3).
# The discrete solution has an Airy-type precursor of that width; cutting it
# off shifts T_num, so the window must not be tighter.
CONE_MARGIN = 16
CONE_SPREAD = 4.0
TRAIL_BUFFER = 8  # extra cells kept behind the trailing window
MIN_CELLS_PER_R = 50


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class DataProfile:
    shape: Literal["standard_bump", "shell_bump"] = "standard_bump"
    R: float = 1.0
    amplitude: float = 1.0
    g_mode: Literal["zero", "equal_to_f"] = "zero"

    def __post_init__(self):
        if self.shape not in ("standard_bump", "shell_bump"):
            raise odi.ParameterError(f"unknown profile shape {self.shape!r}")
        if self.g_mode not in ("zero", "equal_to_f"):
            raise odi.ParameterError(f"unknown g_mode {self.g_mode!r}")
        if not (self.R > 0 and self.amplitude > 0):
            raise odi.ParameterError("R and amplitude must be positive")

    def f(self, r):
        r = np.asarray(r, dtype=float)
        if self.shape == "standard_bump":
            s = r / self.R
        else:
            # bump on the shell R/2 < r < R
            s = (r - 0.75 * self.R) / (0.25 * self.R)
        out = np.zeros_like(r)
        inside = np.abs(s) < 1
        out[inside] = self.amplitude * np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    def g(self, r):
        return self.f(r) if self.g_mode == "equal_to_f" else np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class WaveConfig:
    n: int
    p: float
    epsilon: float
    profile: DataProfile = DataProfile()
    dr: float = 1 / 200
    cfl: float = 0.5
    blowup_threshold: float = 1e6
    horizon: float = 5000.0
    trailing_window: float | None = None  # None: update the whole light cone
    nonlinear: bool = True  # test hook

    def __post_init__(self):
        if self.n < 2:
            raise odi.DomainError("wave runs need n >= 2")
        pc = odi.critical_exponent(self.n)
        if not (1 < self.p <= pc * (1 + 1e-12)):
            raise odi.DomainError(f"p={self.p} outside (1, {pc}]")
        if not self.epsilon > 0:
            raise odi.ParameterError("epsilon must be positive")
        if not (self.dr > 0 and self.profile.R / self.dr >= MIN_CELLS_PER_R):
            raise odi.ParameterError(f"dr must resolve R with at least {MIN_CELLS_PER_R} cells")
        if not 0 < self.cfl <= 1:
            raise odi.ParameterError("cfl must lie in (0, 1]")
        if not self.blowup_threshold > 0:
            raise odi.ParameterError("threshold must be positive")
        if not self.horizon > 0:
            raise odi.ParameterError("horizon must be positive")
        if self.trailing_window is not None and self.trailing_window < 0:
            raise odi.ParameterError("trailing window must be nonnegative")

    @property
    def r_max(self) -> float:
        return self.horizon + self.profile.R + 4 * self.dr

    @property
    def n_cells(self) -> int:
        return int(math.ceil(self.r_max / self.dr))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "epsilon": self.epsilon,
            "shape": self.profile.shape,
            "R": self.profile.R,
            "amplitude": self.profile.amplitude,
            "g_mode": self.profile.g_mode,
            "dr": self.dr,
            "cfl": self.cfl,
            "blowup_threshold": self.blowup_threshold,
            "horizon": self.horizon,
            "trailing_window": self.trailing_window,
        }


@dataclass
class RadialField:
    """Solution at one time level; ``r`` may be a cropped slice of the grid."""

    r: np.ndarray
    u: np.ndarray
    v: np.ndarray
    t: float
    support_radius: float

    @property
    def r_grid(self) -> np.ndarray:
        return self.r

    def copy(self) -> RadialField:
        return RadialField(self.r.copy(), self.u.copy(), self.v.copy(), self.t, self.support_radius)

    def crop(self, r_lo: float, r_hi: float) -> RadialField:
        i0 = max(0, int(np.searchsorted(self.r, r_lo)) - 1)
        i1 = min(len(self.r), int(np.searchsorted(self.r, r_hi)) + 2)
        sl = slice(i0, i1)
        return RadialField(self.r[sl].copy(), self.u[sl].copy(), self.v[sl].copy(), self.t, self.support_radius)


@dataclass(frozen=True)
class LifespanEstimate:
    status: Literal["blew_up", "horizon_reached"]
    T_num: float
    threshold_sensitivity: float  # relative change of T_num with the threshold x10
    resolution_sensitivity: float | None = None  # relative change with dr halved
    quality: str = "ok"  # "ok" or "nonfinite" (no clean threshold crossing)
    steps: int = 0
    max_gradient: float = 0.0
    r_at_blowup: float | None = None
    snapshots: list = field(default_factory=list, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "T_num": self.T_num,
            "threshold_sensitivity": self.threshold_sensitivity,
            "resolution_sensitivity": self.resolution_sensitivity,
            "quality": self.quality,
            "steps": self.steps,
            "max_gradient": self.max_gradient,
            "r_at_blowup": self.r_at_blowup,
        }


def make_initial_data(config: WaveConfig) -> RadialField:
    """Field at t = 0: u = eps f, v = eps g on the full grid."""
    from .functional import compute_A_f

    A_f = compute_A_f(config.profile, config.n).A_f
    if not A_f > 0:
        raise DataError(f"profile has A_f = {A_f}, must be positive")
    r = np.arange(config.n_cells + 1) * config.dr
    u = config.epsilon * config.profile.f(r)
    v = config.epsilon * config.profile.g(r)
    return RadialField(r, u, v, 0.0, config.profile.R)


class _Evolver:
    """Holds the grid arrays of one run and advances them with the kernel."""

    def __init__(self, config: WaveConfig, field0: RadialField | None = None):
        self.cfg = config
        f0 = field0 if field0 is not None else make_initial_data(config)
        self.r = f0.r
        self.u = np.ascontiguousarray(f0.u, dtype=float).copy()
        self.v = np.ascontiguousarray(f0.v, dtype=float).copy()
        self.t = float(f0.t)
        with np.errstate(divide="ignore"):
            self.cr = np.where(self.r > 0, (config.n - 1) / np.where(self.r > 0, self.r, 1.0), 0.0)
        self.work = K.make_work(len(self.r))
        self.steps = 0

    def advance(self, t_end: float, thr: float, max_steps: int = 2**62):
        c = self.cfg
        trail = -1.0 if c.trailing_window is None else float(c.trailing_window)
        out = K.advance(
            self.u, self.v, self.t, float(t_end), float(c.n), float(c.p), c.dr, c.cfl,
            c.profile.R, float(thr), c.nonlinear, trail, TRAIL_BUFFER, CONE_MARGIN, CONE_SPREAD,
            max_steps, self.cr, DT_GROWTH, DT_MIXED, self.work,
        )
        status, t, g, steps, t_prev, g_prev = out
        self.t = t
        self.steps += steps
        return status, g, t_prev, g_prev

    def field(self) -> RadialField:
        return RadialField(self.r, self.u.copy(), self.v.copy(), self.t, self.t + self.cfg.profile.R)

    def argmax_gradient(self) -> float:
        du = np.abs(np.diff(self.u))
        return float(self.r[int(np.argmax(du))] + 0.5 * self.cfg.dr)


def step(field: RadialField, config: WaveConfig) -> RadialField:
    """One RK4 step from ``field`` (which must live on the full grid)."""
    ev = _Evolver(config, field)
    ev.advance(math.inf, math.inf, max_steps=1)
    return ev.field()


def evolve(config: WaveConfig, t_end: float, field0: RadialField | None = None) -> RadialField:
    """Evolve to ``t_end`` ignoring the blow-up threshold (stops if non-finite)."""
    ev = _Evolver(config, field0)
    status, *_ = ev.advance(t_end, math.inf)
    if status == K.NONFINITE:
        raise FloatingPointError(f"non-finite values at t={ev.t}")
    return ev.field()


def _crossing_time(thr, t, g, t_prev, g_prev, p):
    # near blow-up u_r grows like (T - t)^(-1/(p-1)); interpolate in g^(1-p)
    if not (g_prev > 0 and g > g_prev and t > t_prev):
        return t
    a, b, c = g_prev ** (1 - p), g ** (1 - p), thr ** (1 - p)
    w = (a - c) / (a - b) if a != b else 1.0
    return t_prev + min(1.0, max(0.0, w)) * (t - t_prev)


def detect_lifespan(
    config: WaveConfig,
    snapshot_times: Sequence[float] | None = None,
    snapshot_crop: tuple[float, float] | None = None,
    check_resolution: bool = False,
) -> LifespanEstimate:
    """Evolve until max|u_r| crosses the threshold or the horizon is reached.

    After the first crossing the run continues to ten times the threshold to
    measure ``threshold_sensitivity``.  ``snapshot_times`` (ascending, before
    the lifespan) collects fields, cropped to ``t + crop[0] <= r <= t + crop[1]``
    when ``snapshot_crop`` is given.  ``check_resolution`` repeats the run at
    dr / 2 and records the relative change of T_num.
    """
    cfg = config
    ev = _Evolver(cfg)
    snaps = []
    for ts in sorted([] if snapshot_times is None else snapshot_times):
        if ts < ev.t:
            continue
        status, g, t_prev, g_prev = ev.advance(ts, cfg.blowup_threshold)
        if status != K.REACHED:
            break
        fld = ev.field()
        if snapshot_crop is not None:
            fld = fld.crop(ev.t + snapshot_crop[0], ev.t + snapshot_crop[1])
        snaps.append(fld)

    thr = cfg.blowup_threshold
    status, g, t_prev, g_prev = ev.advance(cfg.horizon, thr)
    quality = "ok"
    if status == K.REACHED:
        return LifespanEstimate(
            "horizon_reached", ev.t, 0.0, None, quality, ev.steps, g, None, snaps,
        )
    if status == K.NONFINITE:
        log.warning("non-finite field before threshold at t=%g", t_prev)
        return LifespanEstimate("blew_up", t_prev, math.nan, None, "nonfinite", ev.steps, g_prev, None, snaps)
    if status == K.MAX_STEPS:  # pragma: no cover - unlimited by default
        raise RuntimeError("step budget exhausted")

    T1 = _crossing_time(thr, ev.t, g, t_prev, g_prev, cfg.p)
    r_blow = ev.argmax_gradient()
    g_at = g
    status2, g2, t_prev2, g_prev2 = ev.advance(cfg.horizon, 10 * thr)
    if status2 == K.THRESHOLD:
        T2 = _crossing_time(10 * thr, ev.t, g2, t_prev2, g_prev2, cfg.p)
    else:
        # the field lost finiteness between thresholds; last stable time bounds T2
        T2 = t_prev2
        quality = "nonfinite" if status2 == K.NONFINITE else quality
    sens = abs(T2 - T1) / T1

    res_sens = None
    if check_resolution:
        fine = detect_lifespan(replace(cfg, dr=cfg.dr / 2))
        res_sens = abs(fine.T_num - T1) / T1 if fine.status == "blew_up" else math.inf
    return LifespanEstimate("blew_up", T1, sens, res_sens, quality, ev.steps, g_at, r_blow, snaps)


@dataclass(frozen=True)
class PdeSweep:
    rows: tuple[dict, ...]  # epsilon, T_num, status, threshold_sensitivity, product
    fit: FitResult
    mode: Literal["subcritical", "critical"]
    target_slope: float | None  # subcritical only
    products: tuple[float, ...]  # critical: ln(T) eps^(p-1), ordered by decreasing eps


def _sweep_member(cfg):
    return detect_lifespan(cfg)


def pde_sweep(configs: Sequence[WaveConfig], workers: int = 1) -> PdeSweep:
    """Lifespans over an epsilon ladder and the scaling fit.

    Subcritical p: slope of ln T_num against ln eps (target -2(p-1)/(2-(n-1)(p-1))).
    Critical p: line ln T_num against eps^-(p-1), plus the products ln(T_num) eps^(p-1).
    """
    configs = list(configs)
    if len(configs) < 4:
        raise odi.ParameterError("a PDE sweep needs at least 4 epsilon values")
    ns = {(c.n, c.p) for c in configs}
    if len(ns) != 1:
        raise odi.ParameterError("sweep members must share n and p")
    n, p = ns.pop()
    critical = abs(p - odi.critical_exponent(n)) <= 1e-12 * p
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            ests = list(ex.map(_sweep_member, configs))
    else:
        ests = [_sweep_member(c) for c in configs]

    rows, pts, excluded = [], [], []
    for cfg, est in zip(configs, ests):
        eps = cfg.epsilon
        lnT = math.log(est.T_num) if est.T_num > 0 else math.nan
        prod = lnT * eps ** (p - 1) if critical else est.T_num * eps ** odi.subcritical_exponent(n, p)
        rows.append({
            "n": n, "p": p, "epsilon": eps, "T_num": est.T_num, "status": est.status,
            "threshold_sensitivity": est.threshold_sensitivity, "product": prod,
        })
        if est.status != "blew_up":
            excluded.append((eps, est.status))
            warnings.warn(f"eps={eps}: {est.status}; excluded from fit", stacklevel=2)
            continue
        pts.append((eps ** (-(p - 1)), lnT) if critical else (math.log(eps), lnT))
    if len(pts) < 3:
        raise FitError(f"only {len(pts)} usable rows")
    fit = fit_line(pts, excluded)
    ok = sorted((r for r in rows if r["status"] == "blew_up"), key=lambda r: -r["epsilon"])
    products = tuple(r["product"] for r in ok) if critical else ()
    target = None if critical else -odi.subcritical_exponent(n, p)
    return PdeSweep(tuple(rows), fit, "critical" if critical else "subcritical", target, products)


def support_radius(field: RadialField, tol: float = 0.0) -> float:
    """Outermost node where |u| or |v| exceeds tol (0 for a vanishing field)."""
    nz = np.nonzero((np.abs(field.u) > tol) | (np.abs(field.v) > tol))[0]
    return float(field.r[nz[-1]]) if nz.size else 0.0


def discrete_energy(field: RadialField, n: int) -> float:
    """Sum of (v^2 + (D+ u)^2) r^(n-1) dr with staggered gradients."""
    r = field.r
    dr = r[1] - r[0]
    du = np.diff(field.u) / dr
    rm = 0.5 * (r[1:] + r[:-1])
    w = r ** (n - 1)
    w[0] = 0.5 * w[0]
    return float(np.sum(field.v**2 * w) * dr + np.sum(du**2 * rm ** (n - 1)) * dr)


def write_field_csv(path, field: RadialField, meta: dict) -> None:
    """Rows r,u,v with a comment header carrying t and the run metadata."""
    from .report import fmt

    with open(path, "w", newline="") as fh:
        fh.write("# schema=1\n")
        fh.write(f"# t={fmt(field.t)}\n")
        fh.write(f"# support_radius={fmt(field.support_radius)}\n")
        for k, val in meta.items():
            fh.write(f"# {k}={fmt(val)}\n")
        fh.write("r,u,v\n")
        for a, b, c in zip(field.r, field.u, field.v):
            fh.write(f"{fmt(a)},{fmt(b)},{fmt(c)}\n")


def read_field_csv(path) -> tuple[RadialField, dict]:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                k, _, val = line[1:].strip().partition("=")
                meta[k] = val
            elif line and line != "r,u,v":
                rows.append([float(x) for x in line.split(",")])
    arr = np.asarray(rows, dtype=float).reshape(-1, 3)
    t = float(meta.pop("t"))
    sr = float(meta.pop("support_radius"))
    meta.pop("schema", None)
    return RadialField(arr[:, 0], arr[:, 1], arr[:, 2], t, sr), meta


def save_snapshots(path, snapshots: Sequence[RadialField], config: WaveConfig) -> None:
    """Store snapshots (possibly cropped, different lengths) in one npz file."""
    arrays = {}
    for i, s in enumerate(snapshots):
        arrays[f"r{i}"] = s.r
        arrays[f"u{i}"] = s.u
        arrays[f"v{i}"] = s.v
    arrays["t"] = np.array([s.t for s in snapshots])
    arrays["support"] = np.array([s.support_radius for s in snapshots])
    cfg = config.to_dict()
    arrays["config_keys"] = np.array(list(cfg.keys()))
    arrays["config_values"] = np.array([repr(v) for v in cfg.values()])
    np.savez_compressed(path, **arrays)


def load_snapshots(path) -> tuple[list[RadialField], WaveConfig]:
    import ast

    with np.load(path) as z:
        ts, sup = z["t"], z["support"]
        snaps = [RadialField(z[f"r{i}"], z[f"u{i}"], z[f"v{i}"], float(ts[i]), float(sup[i])) for i in range(len(ts))]
        cfg = {k: ast.literal_eval(v) for k, v in zip(z["config_keys"], z["config_values"])}
    prof = DataProfile(cfg.pop("shape"), cfg.pop("R"), cfg.pop("amplitude"), cfg.pop("g_mode"))
    return snaps, WaveConfig(profile=prof, **cfg)
