"""Iteration ladders and sharp lifespan constants for the critical and subcritical ODI classes.

Everything here is closed-form arithmetic in double precision.  The ladder
coefficients ``C_k`` underflow and the times ``T_k`` overflow within a few
iterations, so ladders are carried in the natural-log domain:
``lnC = ln C_k`` and ``lnT = ln(T_k + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

__all__ = [
    "DomainError",
    "ParameterError",
    "CriticalOdiParams",
    "SubcriticalOdiParams",
    "LadderEntry",
    "IterationLadder",
    "SharpConstants",
    "TheoremConstants",
    "critical_exponent",
    "unit_ball_volume",
    "sharp_constants",
    "critical_ladder",
    "subcritical_ladder",
    "critical_closed_form",
    "subcritical_closed_form",
    "predict_lifespan_critical",
    "predict_lifespan_subcritical",
    "subcritical_exponent",
    "theorem_constants",
]

LADDER_CAP = 60
ENDPOINT_GUARD = 1e-6
SERIES_TAIL_TOL = 1e-15


class DomainError(ValueError):
    """Parameters outside the mathematical domain of an operation."""


class ParameterError(ValueError):
    """Numerical controls outside the supported range (e.g. ladder cap)."""


def critical_exponent(n: int) -> float:
    """Return ``(n+1)/(n-1)`` for ``n >= 2`` and ``math.inf`` for ``n == 1``."""
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n!r}")
    if n == 1:
        return math.inf
    return (n + 1) / (n - 1)


def unit_ball_volume(m: int) -> float:
    """Volume of the unit ball in R^m (alpha_0 = 1, alpha_1 = 2, alpha_2 = pi)."""
    if m < 0:
        raise DomainError(f"ball dimension must be >= 0, got {m}")
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def _check_p_critical(p: float) -> None:
    if not p > 1.0:
        raise DomainError(f"p must exceed 1, got {p}")
    if p - 1.0 < ENDPOINT_GUARD:
        raise DomainError(f"p={p} is within {ENDPOINT_GUARD:g} of 1")


def _check_p_subcritical(n: int, p: float) -> None:
    _check_p_critical(p)
    pc = critical_exponent(n)
    if not p < pc:
        raise DomainError(f"p={p} is not subcritical for n={n} (p_c={pc})")
    if pc - p < ENDPOINT_GUARD:
        raise DomainError(f"p={p} is within {ENDPOINT_GUARD:g} of p_c({n})={pc}")


def _is_subcritical(n: int, p: float) -> bool:
    try:
        _check_p_subcritical(n, p)
    except DomainError:
        return False
    return True


@dataclass(frozen=True)
class CriticalOdiParams:
    A: float
    p: float
    T0: float

    def __post_init__(self):
        if not self.A > 0:
            raise DomainError(f"A must be positive, got {self.A}")
        if not self.T0 > 0:
            raise DomainError(f"T0 must be positive, got {self.T0}")
        _check_p_critical(self.p)


@dataclass(frozen=True)
class SubcriticalOdiParams:
    A: float
    p: float
    n: int
    T0: float

    def __post_init__(self):
        if not self.A > 0:
            raise DomainError(f"A must be positive, got {self.A}")
        if not self.T0 > 0:
            raise DomainError(f"T0 must be positive, got {self.T0}")
        _check_p_subcritical(self.n, self.p)


@dataclass(frozen=True)
class LadderEntry:
    k: int
    q: float
    lnC: float
    lnT: float


@dataclass(frozen=True)
class IterationLadder:
    variant: Literal["critical", "subcritical"]
    entries: tuple[LadderEntry, ...]
    tilde_T: float | None = None  # ln(T~ + 1), subcritical only

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k: int) -> LadderEntry:
        """1-based access matching the ladder index."""
        if k < 1 or k > len(self.entries):
            raise IndexError(k)
        return self.entries[k - 1]


@dataclass(frozen=True)
class SharpConstants:
    n: int
    p: float
    p_prime: float
    c_tilde_crit: float
    remark_crit_bound: float
    # None when p is not strictly subcritical for n
    b0: float | None
    b1: float | None
    c_tilde_sub: float | None
    remark_sub_bound: float | None

    @property
    def subcritical_valid(self) -> bool:
        return self.c_tilde_sub is not None


def _exp_or_inf(x: float) -> float:
    # values beyond double range are reported as +inf rather than raising
    return math.exp(x) if x < 709.0 else math.inf


def _crit_ratio(p: float) -> float:
    return (p - 1) ** 3 / max(p, 2 * (p - 1))


def _b0_b1(n: int, p: float) -> tuple[float, float]:
    a = 1 / (p - 1) - (n - 1) / 2
    b0 = a + max(0.0, (n + 3) / 2 - 1 / (p - 1)) / p
    b1 = a + max(0.0, (n + 1) / 2 - 1 / (p - 1)) / p
    return b0, b1


def subcritical_exponent(n: int, p: float) -> float:
    """``2(p-1)/(2-(n-1)(p-1))``, the power of the data size in the lifespan law."""
    return 2 * (p - 1) / (2 - (n - 1) * (p - 1))


def sharp_constants(n: int, p: float) -> SharpConstants:
    _check_p_critical(p)
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n!r}")
    ratio = _crit_ratio(p)
    c_crit = 0.5 * ratio ** (1 / (p - 1)) * p ** (-(2 * p - 1) / (p - 1) ** 2)
    remark_crit = 2 ** (p - 1) / ratio * p ** ((2 * p - 1) / (p - 1))

    b0 = b1 = c_sub = remark_sub = None
    if _is_subcritical(n, p):
        b0, b1 = _b0_b1(n, p)
        c_sub = (4 * b0 * b1) ** (-1 / (p - 1)) * p ** (-2 * p / (p - 1) ** 2) / 8
        kappa = 2 - (n - 1) * (p - 1)
        ln_remark = (math.log(4) * (3 * p - 1) + 2 * math.log(b0 * b1) + 4 * p / (p - 1) * math.log(p)) / kappa
        remark_sub = _exp_or_inf(ln_remark)
    return SharpConstants(
        n=int(n),
        p=p,
        p_prime=p / (p - 1),
        c_tilde_crit=c_crit,
        remark_crit_bound=remark_crit,
        b0=b0,
        b1=b1,
        c_tilde_sub=c_sub,
        remark_sub_bound=remark_sub,
    )


def _check_K(K: int) -> None:
    if int(K) != K or K < 1:
        raise ParameterError(f"ladder length must be a positive integer, got {K!r}")
    if K > LADDER_CAP:
        raise ParameterError(f"ladder length {K} exceeds cap {LADDER_CAP}")


def critical_ladder(params: CriticalOdiParams, K: int) -> IterationLadder:
    """Recursive ladder H >= C_k (t+1) ln^{q_k}(t+1) for t >= T_k, k = 1..K."""
    _check_K(K)
    p, A, T0 = params.p, params.A, params.T0
    lnT = max(2.0, math.log1p(T0), 2 * math.sqrt(2 / p), math.sqrt(2 * p) / (p - 1))
    q = 1.0
    lnC = math.log(A / 2)
    log_ratio = math.log(_crit_ratio(p))
    log_p = math.log(p)
    entries = [LadderEntry(1, q, lnC, lnT)]
    for k in range(1, K):
        q = p * q - p + 2
        lnC = p * lnC + log_ratio - (k + 1) * log_p
        lnT = (2 * p) ** (1 / q) * p * lnT
        entries.append(LadderEntry(k + 1, q, lnC, lnT))
    return IterationLadder("critical", tuple(entries))


def critical_closed_form(params: CriticalOdiParams, k: int) -> LadderEntry:
    """Closed-form entry k (independent of the recursion)."""
    p, A = params.p, params.A
    ln_T1 = max(2.0, math.log1p(params.T0), 2 * math.sqrt(2 / p), math.sqrt(2 * p) / (p - 1))
    if k == 1:
        return LadderEntry(1, 1.0, math.log(A / 2), ln_T1)
    j = k - 1
    q = (p**j + p - 2) / (p - 1)
    exponent_sum = sum((p - 1) / (p**i + p - 2) for i in range(1, j + 1))
    lnT = (2 * p) ** exponent_sum * p**j * ln_T1
    ln_B = ((j + 2) * (p - 1) + 1) / (p - 1) ** 2 * math.log(p) - math.log(_crit_ratio(p)) / (p - 1)
    c_tilde = sharp_constants(2, p).c_tilde_crit
    lnC = ln_B + p**j * math.log(c_tilde * A)
    return LadderEntry(k, q, lnC, lnT)


def _sub_q(n: int, p: float, j: int) -> float:
    """q_{j+1} from its closed form (j >= 0; j = 0 gives q_1 = 2)."""
    if j == 0:
        return 2.0
    return p**j * (1 / (p - 1) - (n - 1) / 2) + (n + 3) / 2 - 1 / (p - 1)


def _tilde_T_exponent(n: int, p: float) -> float:
    """sum_{k>=1} 1/q_{k+1} + 1/(q_{k+1}-1), truncated with a geometric tail estimate."""
    total = 0.0
    prev = None
    for j in range(1, 100_000):
        q = _sub_q(n, p, j)
        term = 1 / q + 1 / (q - 1)
        total += term
        if prev is not None:
            ratio = term / prev
            if ratio < 1.0:
                tail = term * ratio / (1 - ratio)
                if tail < SERIES_TAIL_TOL * total:
                    return total + tail
        prev = term
    raise ParameterError(f"T~ series did not converge for n={n}, p={p}")


def subcritical_ladder(params: SubcriticalOdiParams, K: int) -> IterationLadder:
    """Recursive ladder H >= C_k (t+1)^{q_k} for t >= T_k, k = 1..K."""
    _check_K(K)
    n, p, A = params.n, params.p, params.A
    b0, b1 = _b0_b1(n, p)
    ln2 = math.log(2.0)
    log_4b = math.log(4 * b0 * b1)
    log_p = math.log(p)
    q = 2.0
    lnC = math.log(A / 8)
    lnT1 = math.log1p(max(1.0, params.T0))
    lnT = lnT1
    entries = [LadderEntry(1, q, lnC, lnT)]
    for k in range(1, K):
        q = p * (q - (n + 3) / 2) + (n + 5) / 2
        lnT = lnT + ln2 * (1 / (q - 1) + 1 / q)
        lnC = p * lnC - log_4b - 2 * k * log_p
        entries.append(LadderEntry(k + 1, q, lnC, lnT))
    tilde = lnT1 + ln2 * _tilde_T_exponent(n, p)
    return IterationLadder("subcritical", tuple(entries), tilde_T=tilde)


def subcritical_closed_form(params: SubcriticalOdiParams, k: int) -> LadderEntry:
    n, p, A = params.n, params.p, params.A
    lnT1 = math.log1p(max(1.0, params.T0))
    if k == 1:
        return LadderEntry(1, 2.0, math.log(A / 8), lnT1)
    j = k - 1
    b0, b1 = _b0_b1(n, p)
    q = _sub_q(n, p, j)
    s = sum(1 / _sub_q(n, p, i) + 1 / (_sub_q(n, p, i) - 1) for i in range(1, j + 1))
    lnT = lnT1 + math.log(2.0) * s
    ln_D = math.log(4 * b0 * b1) / (p - 1) + 2 * (j * (p - 1) + p) / (p - 1) ** 2 * math.log(p)
    c_tilde = sharp_constants(n, p).c_tilde_sub
    lnC = ln_D + p**j * math.log(c_tilde * A)
    return LadderEntry(k, q, lnC, lnT)


def predict_lifespan_critical(A: float, p: float) -> float:
    """Asymptotic bound on ln(T+1) for members of the critical class: (C~_crit A)^{-(p-1)}."""
    if not A > 0:
        raise DomainError(f"A must be positive, got {A}")
    _check_p_critical(p)
    c = sharp_constants(2, p).c_tilde_crit
    if c == 0.0:
        return math.inf
    return _exp_or_inf(-(p - 1) * (math.log(c) + math.log(A)))


def predict_lifespan_subcritical(A: float, n: int, p: float) -> float:
    """Asymptotic bound on T+1 for members of the subcritical class."""
    if not A > 0:
        raise DomainError(f"A must be positive, got {A}")
    _check_p_subcritical(n, p)
    c = sharp_constants(n, p).c_tilde_sub
    if c == 0.0:
        return math.inf
    return _exp_or_inf(-subcritical_exponent(n, p) * (math.log(c) + math.log(A)))


@dataclass(frozen=True)
class TheoremConstants:
    crit: float | None
    sub: float | None


def theorem_constants(
    n: int,
    p: float,
    R: float,
    A_f: float,
    field: Literal["both", "crit", "sub"] = "both",
) -> TheoremConstants:
    """Explicit limsup constants of the critical and subcritical lifespan theorems.

    With ``field="both"`` whichever of the two applies to ``p`` is filled and
    the other is None.  Asking for a specific field with an incompatible ``p``
    raises DomainError.
    """
    if int(n) != n or n < 2:
        raise DomainError(f"theorem constants need n >= 2, got {n}")
    if not (R > 0 and A_f > 0):
        raise DomainError("R and A_f must be positive")
    pc = critical_exponent(n)
    is_crit = math.isclose(p, pc, rel_tol=1e-12)
    is_sub = _is_subcritical(n, p)
    if field == "crit" and not is_crit:
        raise DomainError(f"critical constant requires p = p_c({n}) = {pc}, got {p}")
    if field == "sub" and not is_sub:
        raise DomainError(f"subcritical constant requires 1 < p < p_c({n}), got {p}")
    if field == "both" and not (is_crit or is_sub):
        raise DomainError(f"p={p} is neither critical nor subcritical for n={n}")

    alpha = unit_ball_volume(n - 1)
    crit = sub = None
    if is_crit and field in ("both", "crit"):
        crit = (
            4 ** (-(n + 1) / (n - 1))
            * R ** ((n + 3) / (n - 1))
            * max(n + 1, 4)
            * (n + 1) ** ((n + 3) / 2)
            * (n - 1) ** (-(n - 1) / 2)
            * (alpha / A_f) ** (2 / (n + 1))
        )
    if is_sub and field in ("both", "sub"):
        b0, b1 = _b0_b1(n, p)
        kappa = 2 - (n - 1) * (p - 1)
        inner = (
            2 ** (-(n - 1) * p + n + 5)
            * (b0 * b1) ** 2
            * p ** (4 * p / (p - 1))
            * (R ** ((n + 3) / 2) / A_f * alpha / (n + 1)) ** (2 * (p - 1))
        )
        sub = inner ** (1 / kappa)
    return TheoremConstants(crit=crit, sub=sub)
