"""Log-log least squares used by every scaling study."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


class DomainError(ValueError):
    """Log-log fit requested on non-positive data."""


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def fit_slope(points: Iterable[tuple[float, float]], log_base: float = 2.0) -> SlopeFit:
    """Unweighted least squares of log(y) against log(x)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise DomainError("log-log fit needs positive finite values")
    if len(np.unique(x)) != len(x):
        raise ValueError("x values must be distinct")
    lx = np.log(x) / math.log(log_base)
    ly = np.log(y) / math.log(log_base)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r2)


def geometric_mean(values: Iterable[float]) -> float:
    v = np.asarray(list(values), dtype=float)
    return float(np.exp(np.mean(np.log(v))))
