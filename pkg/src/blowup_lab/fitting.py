"""Least-squares line fits used for scaling-exponent extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["FitError", "FitResult", "fit_line"]


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    excluded: tuple[tuple[object, str], ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "excluded": [{"row": row, "reason": why} for row, why in self.excluded],
        }


def fit_line(points, excluded=()) -> FitResult:
    """Ordinary least squares y = slope * x + intercept over (x, y) pairs."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise FitError(f"need at least 3 (x, y) points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise FitError("non-finite coordinates")
    x, y = pts[:, 0], pts[:, 1]
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 1e-300 * max(1.0, float(np.sum(x**2))):
        raise FitError("abscissae are all equal")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return FitResult(slope, intercept, r2, len(x), tuple(excluded))
