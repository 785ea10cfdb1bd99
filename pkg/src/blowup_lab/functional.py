"""Plane-integral (star) transform of radial fields and the weighted front functional.

For a radial function u on R^n the hyperplane integral at offset r is

    u*(r) = sigma_{n-2} int_0^rho_max u(sqrt(r^2 + rho^2)) rho^(n-2) d rho,

with rho_max = sqrt(S^2 - r^2) when u is supported in |x| <= S.  The functional

    U''(t) = int_{t+R0}^{t+R} r^-beta u*(t, r) dr,  U(0) = U'(0) = 0,

is assembled from solver snapshots and checked against the two lower bounds it
must satisfy: a linear one driven by the data mass near the front and a
nonlinear one of ODI form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma, roots_jacobi, roots_legendre

from . import odi

__all__ = [
    "FunctionalConfig",
    "StarSlice",
    "AfResult",
    "FunctionalTrace",
    "KernelConstants",
    "ResidualReport",
    "FunctionalError",
    "sphere_measure",
    "star_transform",
    "compute_A_f",
    "compute_functional",
    "kernel_constants",
    "compute_J",
    "verify_lower_bounds",
    "default_snapshot_times",
]

MIN_EARLY_SAMPLES = 16
BRANCH_TOL = 1e-12


class FunctionalError(ValueError):
    pass


@dataclass(frozen=True)
class FunctionalConfig:
    beta: float
    R: float = 1.0
    p: float = 2.0
    R0: float | None = None  # None: 3R/4

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise odi.ParameterError("beta must lie in [0, 1]")
        if not self.R > 0:
            raise odi.ParameterError("R must be positive")
        if not self.p > 1:
            raise odi.DomainError("p must exceed 1")
        if not 0 < self.r0 < self.R:
            raise odi.ParameterError("R0 must lie in (0, R)")

    @property
    def r0(self) -> float:
        return 0.75 * self.R if self.R0 is None else self.R0

    @property
    def R1(self) -> float:
        return (self.R - self.r0) / 2

    @property
    def p_prime(self) -> float:
        return self.p / (self.p - 1)

    @property
    def nonlinear_factor(self) -> float:
        return 1 - 2 * self.beta * self.R1 / self.r0

    def to_dict(self) -> dict:
        return {"beta": self.beta, "R": self.R, "R0": self.r0, "R1": self.R1, "p": self.p}


@dataclass(frozen=True)
class StarSlice:
    t: float
    r_grid: np.ndarray
    u_star: np.ndarray


def sphere_measure(k: int) -> float:
    """Surface measure of the unit k-sphere; 2 (two points) for k = 0."""
    return 2 * math.pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def _profile_of(field) -> tuple[Callable, float, float]:
    """(u(lambda), support radius, time) from a RadialField or (callable, S)."""
    if isinstance(field, tuple):
        fn, S = field
        return fn, float(S), 0.0
    r, u = np.asarray(field.r, dtype=float), np.asarray(field.u, dtype=float)
    spline = CubicSpline(r, u, extrapolate=False)
    r_lo, r_hi = r[0], r[-1]

    def fn(lam):
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < r_lo - 1e-12 * max(1.0, r_lo)):
            raise FunctionalError(f"star transform needs u below the stored range (r >= {r_lo})")
        out = spline(np.clip(lam, r_lo, None))
        return np.where(lam > r_hi, 0.0, out)

    return fn, float(field.support_radius), float(field.t)


def star_transform(field, n: int, r=None, nodes: int = 48) -> StarSlice:
    """u*(r) at the radii ``r`` (default: the field grid) by Gauss-Legendre in rho.

    ``field`` is a RadialField (cubic interpolation between nodes) or a pair
    (callable u(lambda), support radius).
    """
    if n < 2:
        raise odi.DomainError("star transform needs n >= 2")
    fn, S, t = _profile_of(field)
    r = np.atleast_1d(np.asarray(field.r if r is None else r, dtype=float))
    x, w = roots_legendre(nodes)
    sig = sphere_measure(n - 2)
    out = np.zeros_like(r)
    inside = np.abs(r) < S
    ri = np.abs(r[inside])
    rho_max = np.sqrt(S**2 - ri**2)
    rho = 0.5 * rho_max[:, None] * (x[None, :] + 1)
    lam = np.sqrt(ri[:, None] ** 2 + rho**2)
    vals = fn(lam.ravel()).reshape(lam.shape) * rho ** (n - 2)
    out[inside] = sig * 0.5 * rho_max * (vals @ w)
    return StarSlice(t, r, out)


@dataclass(frozen=True)
class AfResult:
    A_f: float  # int_{3R/4}^R f* dr
    A_f_conservative: float  # (1/2) int_{R0}^R f* dr
    R0: float
    quadrature_error: float  # change when all node counts are doubled


def _af_integral(fn, R, n, a, nodes):
    x, w = roots_legendre(nodes)
    r = a + (R - a) * (x + 1) / 2
    fs = star_transform((fn, R), n, r, nodes).u_star
    return 0.5 * (R - a) * float(fs @ w)


def compute_A_f(profile, n: int, R0: float | None = None, R: float | None = None, nodes: int = 64) -> AfResult:
    """Data mass in the slab [3R/4, R] x R^(n-1) and the conservative half-mass over [R0, R].

    ``profile`` is a DataProfile or a plain callable f(r), in which case R is required.
    """
    if callable(profile):
        fn = profile
        if R is None:
            raise odi.ParameterError("a callable profile needs R")
    else:
        fn, R = profile.f, profile.R
    R0 = 0.75 * R if R0 is None else R0
    a_f = _af_integral(fn, R, n, 0.75 * R, nodes)
    a_c = 0.5 * _af_integral(fn, R, n, R0, nodes)
    a_f2 = _af_integral(fn, R, n, 0.75 * R, 2 * nodes)
    err = abs(a_f2 - a_f)
    if not a_f > 10 * err:
        from .wave import DataError

        raise DataError(f"A_f = {a_f} is not positive beyond quadrature error {err}")
    return AfResult(a_f, a_c, R0, err)


@dataclass(frozen=True)
class FunctionalTrace:
    times: np.ndarray
    U: np.ndarray
    U_second: np.ndarray
    A_f: float  # conservative value used by the linear bound
    config: FunctionalConfig
    n: int
    error_U: float  # discretization estimates from a coarser rerun
    error_U_second: float


def _u_second(snap, n, cfg, nr, nrho, star):
    t = snap.t
    a, b = t + cfg.r0, t + cfg.R
    x, w = roots_legendre(nr)
    r = a + (b - a) * (x + 1) / 2
    us = star(snap, r) if star is not None else star_transform(snap, n, r, nrho).u_star
    return 0.5 * (b - a) * float((r ** (-cfg.beta) * us) @ w)


def _double_integral(times, u2):
    """U(t_i) = int_0^t_i (t_i - tau) U''(tau) d tau by the trapezoid rule."""
    U = np.zeros_like(u2)
    for i in range(1, len(times)):
        tau = times[: i + 1]
        U[i] = np.trapezoid((times[i] - tau) * u2[: i + 1], tau)
    return U


def compute_functional(
    snapshots: Sequence,
    config: FunctionalConfig,
    n: int,
    A_f: float | None = None,
    nodes_r: int = 32,
    nodes_rho: int = 48,
    star: Callable | None = None,
    check_from: float | None = None,
) -> FunctionalTrace:
    """U'' at every snapshot by quadrature, then U by double time integration.

    The first snapshot must be at t = 0 and at least 16 snapshots must lie at
    or before ``check_from`` (default R1).  ``star(field, r)`` overrides the
    star transform (for synthetic checks).  A coarser pass with half the nodes
    and every other snapshot provides the discretization estimates.
    """
    snaps = sorted(snapshots, key=lambda s: s.t)
    times = np.array([s.t for s in snaps], dtype=float)
    if len(times) == 0 or times[0] != 0.0:
        raise FunctionalError("the first snapshot must be at t = 0")
    if np.any(np.diff(times) <= 0):
        raise FunctionalError("snapshot times must be distinct")
    check_from = config.R1 if check_from is None else check_from
    early = int(np.sum(times <= check_from + 1e-12))
    if early < MIN_EARLY_SAMPLES:
        raise FunctionalError(
            f"only {early} snapshots up to t={check_from}; need {MIN_EARLY_SAMPLES} for the time integration"
        )
    u2 = np.array([_u_second(s, n, config, nodes_r, nodes_rho, star) for s in snaps])
    U = _double_integral(times, u2)

    u2c = np.array([_u_second(s, n, config, nodes_r // 2, nodes_rho // 2, star) for s in snaps[::2]])
    Uc = _double_integral(times[::2], u2c)
    err_u2 = float(np.max(np.abs(u2c - u2[::2])))
    err_U = float(np.max(np.abs(Uc - U[::2])))
    return FunctionalTrace(times, U, u2, math.nan if A_f is None else A_f, config, n, err_U, err_u2)


@dataclass(frozen=True)
class KernelConstants:
    c: float
    Jbar: Callable[[float], float]
    branch: Literal["integrable", "logarithmic", "power"]
    exponent: float  # (n-1)/2 - beta p'


def kernel_constants(n: int, p: float, config: FunctionalConfig) -> KernelConstants:
    """Constant c and majorant Jbar with J(t) <= c Jbar(t), by the sign of (n-1)/2 - beta p' + 1."""
    cfg = replace(config, p=p)
    R, R0, R1 = cfg.R, cfg.r0, cfg.R1
    e = (n - 1) / 2 - cfg.beta * cfg.p_prime
    pre = odi.unit_ball_volume(n - 1) * R1 ** ((n + 3) / 2) * 2 ** (n + 1) * (R0 / R) ** (-cfg.beta * cfg.p_prime)
    if abs(e + 1) <= BRANCH_TOL * max(1.0, abs(e)):
        return KernelConstants(pre, lambda t: (t + R) * math.log((t + R) / R), "logarithmic", e)
    if e < -1:
        return KernelConstants(pre * R ** (e + 1) / (-e - 1), lambda t: t + R, "integrable", e)
    return KernelConstants(pre / (e + 1), lambda t: (t + R) ** (e + 2), "power", e)


def compute_J(t: float, n: int, config: FunctionalConfig, p: float, nodes: int = 48) -> float:
    """Double integral J(t) with Gauss-Jacobi in lambda and Gauss-Legendre in tau."""
    if t < 0:
        raise odi.ParameterError("t must be nonnegative")
    if t == 0:
        return 0.0
    cfg = replace(config, p=p)
    R, R0 = cfg.R, cfg.r0
    a = (n - 1) / 2
    bp = cfg.beta * cfg.p_prime
    h = (R - R0) / 2
    xj, wj = roots_jacobi(nodes, a, 0.0)  # weight (1 - x)^a on [-1, 1]
    xl, wl = roots_legendre(nodes)
    tau = 0.5 * t * (xl + 1)
    lam = tau[:, None] + R0 + h * (xj[None, :] + 1)
    # (tau+R)^2 - lam^2 = h (1 - x) (tau + R + lam)
    inner = (lam - tau[:, None] - R0) * lam ** (-bp) * (tau[:, None] + R + lam) ** a
    inner = h ** (a + 1) * (inner @ wj)
    return odi.unit_ball_volume(n - 1) * 0.5 * t * float(((t - tau) * inner) @ wl)


@dataclass(frozen=True)
class ResidualReport:
    epsilon: float
    n: int
    p: float
    config: FunctionalConfig
    window: tuple[float, float]
    min_linear: float
    min_nonlinear: float | None  # None when the nonlinear check is skipped
    first_violation_linear: float | None
    first_violation_nonlinear: float | None
    tol_linear: float
    tol_nonlinear: float
    nonlinear_checked: bool
    notice: str = ""
    times: np.ndarray = field(default=None, repr=False)
    residual_linear: np.ndarray = field(default=None, repr=False)
    residual_nonlinear: np.ndarray = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        good = self.min_linear >= -self.tol_linear
        if self.nonlinear_checked:
            good = good and self.min_nonlinear >= -self.tol_nonlinear
        return good

    def to_dict(self) -> dict:
        return {
            "config": {"epsilon": self.epsilon, "n": self.n, "p": self.p, **self.config.to_dict()},
            "window": list(self.window),
            "min_residual_linear": self.min_linear,
            "min_residual_nonlinear": self.min_nonlinear,
            "first_violation_linear": self.first_violation_linear,
            "first_violation_nonlinear": self.first_violation_nonlinear,
            "tol_linear": self.tol_linear,
            "tol_nonlinear": self.tol_nonlinear,
            "nonlinear_checked": self.nonlinear_checked,
            "notice": self.notice,
            "ok": self.ok,
        }

    def write_json(self, path) -> None:
        from .report import dumps

        with open(path, "w") as fh:
            fh.write(dumps(self.to_dict()) + "\n")

    def write_csv(self, path) -> None:
        from .report import write_csv

        rows = [
            {"t": t, "residual_linear": a, "residual_nonlinear": b}
            for t, a, b in zip(self.times, self.residual_linear, self.residual_nonlinear)
        ]
        write_csv(path, ["t", "residual_linear", "residual_nonlinear"], rows)


def _first_below(t, res, tol):
    bad = np.nonzero(res < -tol)[0]
    return float(t[bad[0]]) if bad.size else None


def nonlinear_rhs(U, t, n, p, config: FunctionalConfig):
    kc = kernel_constants(n, p, config)
    b = config.beta
    jb = np.array([kc.Jbar(x) for x in np.atleast_1d(t)])
    return (
        0.5 * kc.c ** (-(p - 1)) * config.nonlinear_factor**p
        * (t + config.R) ** (-b - 1) * jb ** (-(p - 1)) * np.abs(U) ** p
    )


def verify_lower_bounds(
    trace: FunctionalTrace,
    epsilon: float,
    p: float,
    A_f: float | None = None,
    t_max: float | None = None,
) -> ResidualReport:
    """Residuals of the linear and nonlinear lower bounds on U''.

    Both are evaluated on [R1, t_max] (default: the last trace time).  The
    nonlinear bound is skipped with a notice unless 1 - 2 beta R1 / R0 > 0.
    The tolerance of each check is max(1e-8, 3 x the discretization estimate).
    """
    cfg, n = trace.config, trace.n
    A = trace.A_f if A_f is None else A_f
    if not math.isfinite(A):
        raise FunctionalError("A_f missing")
    t = trace.times
    t_max = t[-1] if t_max is None else t_max
    sel = (t >= cfg.R1 - 1e-12) & (t <= t_max + 1e-12)
    if not np.any(sel):
        raise FunctionalError("no trace samples inside the check window")
    res_lin = trace.U_second - epsilon * A * (t + cfg.R) ** (-cfg.beta)
    tol_lin = max(1e-8, 3 * trace.error_U_second)

    checked = cfg.nonlinear_factor > 0
    notice = ""
    res_nl = np.full_like(t, math.nan)
    tol_nl = math.nan
    min_nl = first_nl = None
    if checked:
        on = t >= cfg.R1 - 1e-12
        rhs = nonlinear_rhs(trace.U[on], t[on], n, p, cfg)
        res_nl[on] = trace.U_second[on] - rhs
        # sensitivity of the right-hand side to the error in U
        with np.errstate(divide="ignore", invalid="ignore"):
            drhs = np.where(trace.U[on] > 0, p * rhs / trace.U[on], 0.0)
        tol_nl = max(1e-8, 3 * (trace.error_U_second + float(np.max(drhs, initial=0.0)) * trace.error_U))
        min_nl = float(np.min(res_nl[sel]))
        first_nl = _first_below(t[sel], res_nl[sel], tol_nl)
    else:
        notice = "nonlinear bound skipped: 1 - 2 beta R1 / R0 <= 0"

    return ResidualReport(
        epsilon, n, p, cfg, (float(cfg.R1), float(t_max)),
        float(np.min(res_lin[sel])), min_nl,
        _first_below(t[sel], res_lin[sel], tol_lin), first_nl,
        tol_lin, tol_nl, checked, notice,
        t[sel], res_lin[sel], res_nl[sel],
    )


def default_snapshot_times(R1: float, t_end: float, n_uniform: int = 400, n_early: int = 24) -> np.ndarray:
    """Dense samples on [0, R1] followed by a uniform cadence up to t_end."""
    early = np.linspace(0.0, R1, n_early)
    late = np.linspace(0.0, t_end, n_uniform + 1)
    return np.unique(np.concatenate([early, late[late > R1]]))
