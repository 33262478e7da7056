"""Low/high frequency splitting of initial data and rough-data generators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fitting import fit_slope
from .model import SecondOrderState, energy
from .spectral import (
    ComplexField,
    Grid,
    GridMismatchError,
    ParameterError,
    RealField,
    apply_multiplier,
    bracket_power,
    high_pass,
    low_pass,
    sobolev_norm,
)

SPECTRAL_MARGIN = 0.01


@dataclass(frozen=True)
class RegularityParams:
    s: float
    m: float
    N: float
    delta: float = 0.05

    def __post_init__(self):
        if not (0 < self.s <= 1 and 0 < self.m <= 1):
            raise ParameterError(f"s and m must lie in (0, 1], got s={self.s}, m={self.m}")
        if not self.N >= 1:
            raise ParameterError(f"cutoff N must be >= 1, got {self.N}")
        if not self.delta > 0:
            raise ParameterError(f"delta must be positive, got {self.delta}")

    @property
    def sm(self) -> float:
        """min(s, m)."""
        return min(self.s, self.m)

    @property
    def admissible(self) -> bool:
        """Regularity range covered by the global existence result."""
        return self.s > 0.7 and self.m > 0.7 and self.s + self.m > 1.5

    def with_N(self, N: float) -> "RegularityParams":
        return RegularityParams(self.s, self.m, N, self.delta)


@dataclass(frozen=True)
class SplitData:
    psi01: ComplexField
    psi02: ComplexField
    phi01: RealField
    phi02: RealField
    phi11: RealField
    phi12: RealField
    params: RegularityParams

    def low_state(self) -> SecondOrderState:
        return SecondOrderState(self.psi01, self.phi01, self.phi11)

    def high_state(self) -> SecondOrderState:
        return SecondOrderState(self.psi02, self.phi02, self.phi12)


def split_data(psi0: ComplexField, phi0: RealField, phi1: RealField,
               params: RegularityParams) -> SplitData:
    """Sharp split at |k| = N; the closed ball |k| <= N is the low part."""
    if phi0.grid != psi0.grid or phi1.grid != psi0.grid:
        raise GridMismatchError("data fields live on different grids")
    N = params.N
    return SplitData(
        low_pass(psi0, N), high_pass(psi0, N),
        low_pass(phi0, N), high_pass(phi0, N),
        low_pass(phi1, N), high_pass(phi1, N),
        params,
    )


def generate_rough_data(grid: Grid, s_target: float, seed: int = 0,
                        style: str = "random", real: bool = False) -> ComplexField:
    """Field with coefficients ~ <k>^{-(s + d/2 + 0.01)}, normalized in H^s.

    ``random`` multiplies the profile by complex standard normals / sqrt(2);
    ``deterministic`` uses the bare profile.  ``real`` projects onto real
    fields before normalizing.  Equal seeds give bit-identical output.
    """
    if not 0 < s_target <= 1:
        raise ParameterError(f"s_target must lie in (0, 1], got {s_target}")
    decay = s_target + grid.dim / 2 + SPECTRAL_MARGIN
    profile = grid.bracket ** (-decay)
    if style == "random":
        rng = np.random.default_rng(seed)
        noise = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) / math.sqrt(2)
        coeffs = profile * noise
    elif style == "deterministic":
        coeffs = profile.astype(complex)
    else:
        raise ParameterError(f"unknown style {style!r}")
    f = RealField.symmetrized(grid, coeffs) if real else ComplexField(grid, coeffs)
    return f * (1.0 / sobolev_norm(f, s_target))


def generate_rough_state(grid: Grid, s: float, m: float, seed: int = 0,
                         style: str = "random") -> SecondOrderState:
    """(psi0, phi0, phi1) in H^s x H^m x H^{m-1}; phi1 = A^{1/2} of an H^m field."""
    psi0 = generate_rough_data(grid, s, seed=seed, style=style)
    phi0 = generate_rough_data(grid, m, seed=seed + 1_000_003, style=style, real=True)
    g1 = generate_rough_data(grid, m, seed=seed + 2_000_003, style=style, real=True)
    phi1 = apply_multiplier(g1, bracket_power(0.5))
    return SecondOrderState(psi0, phi0, phi1)


def generate_smooth_state(grid: Grid, seed: int = 0, amplitude: float = 1.0,
                          width: float = 2.0) -> SecondOrderState:
    """Gaussian-damped random data exp(-|k|^2 / (2 width^2)); each field has L^2 norm ``amplitude``."""
    if not width > 0:
        raise ParameterError(f"width must be positive, got {width}")
    rng = np.random.default_rng(seed)
    damp = np.exp(-grid.k2 / (2 * width**2))

    def draw(real: bool) -> ComplexField:
        c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * damp
        f = RealField.symmetrized(grid, c) if real else ComplexField(grid, c)
        return f * (amplitude / float(np.linalg.norm(f.coeffs)))

    return SecondOrderState(draw(False), draw(True), draw(True))


@dataclass(frozen=True)
class ScalingRecord:
    slope_low: float
    intercept_low: float
    slope_high: float
    intercept_high: float
    expected_slope: float
    low_applies: bool
    high_applies: bool
    per_N: list

    @property
    def slope(self) -> float:
        """Slope of the family the estimate is stated for (low if l >= s)."""
        return self.slope_low if self.low_applies else self.slope_high

    @property
    def intercept(self) -> float:
        return self.intercept_low if self.low_applies else self.intercept_high


def verify_split_scaling(f: ComplexField, s: float, l: float, sweep) -> ScalingRecord:
    """Measure N-scaling of ||low(f)||_{H^l} and ||high(f)||_{H^l}.

    The low part should grow like N^{l-s} for l >= s and the high part decay
    like N^{l-s} for l <= s.
    """
    sweep = [float(N) for N in sweep]
    if len(sweep) < 3 or any(b <= a for a, b in zip(sweep, sweep[1:])):
        raise ParameterError("sweep must be strictly increasing with at least 3 entries")
    rows = []
    for N in sweep:
        rows.append({
            "N": N,
            "norm_low": sobolev_norm(low_pass(f, N), l),
            "norm_high": sobolev_norm(high_pass(f, N), l),
        })
    low = fit_slope([(r["N"], r["norm_low"]) for r in rows])
    high = _safe_fit([(r["N"], r["norm_high"]) for r in rows])
    return ScalingRecord(
        slope_low=low.slope, intercept_low=low.intercept,
        slope_high=high[0], intercept_high=high[1],
        expected_slope=l - s, low_applies=l >= s, high_applies=l <= s, per_N=rows,
    )


def _safe_fit(points):
    pts = [(x, y) for x, y in points if y > 0]
    if len(pts) < 3:
        return math.nan, math.nan
    fit = fit_slope(pts)
    return fit.slope, fit.intercept


def low_part_energy(split: SplitData, coupling: float = 1.0) -> float:
    """E(psi01, phi01, phi11)."""
    return energy(split.low_state(), coupling).energy
