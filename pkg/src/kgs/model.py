"""Klein-Gordon-Schroedinger system with Yukawa coupling.

Second-order form::

    i psi_t + Lap psi = -phi psi
    phi_tt + (1 - Lap) phi = |psi|^2

First-order form with A = 1 - Lap and phi_pm = phi +- i A^{-1/2} phi_t::

    i psi_t + Lap psi = -(1/2)(phi_+ + phi_-) psi
    i phi_pm,t -+ A^{1/2} phi_pm = -+ A^{-1/2} |psi|^2

``coupling`` scales both interaction terms; 0 gives the free flow.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .spectral import (
    ComplexField,
    Grid,
    GridMismatchError,
    RealField,
    padded_values,
    product_coeffs,
)

CONSISTENCY_TOL = 1e-6


class InconsistentStateError(ValueError):
    """phi_- is not the conjugate flip of phi_+, so phi would not be real."""


@dataclass(frozen=True)
class SecondOrderState:
    psi: ComplexField
    phi: RealField
    phi_t: RealField
    time: float = 0.0

    def __post_init__(self):
        g = self.psi.grid
        if self.phi.grid != g or self.phi_t.grid != g:
            raise GridMismatchError("state fields live on different grids")
        if not isinstance(self.phi, RealField) or not isinstance(self.phi_t, RealField):
            raise TypeError("phi and phi_t must be RealField")

    @property
    def grid(self) -> Grid:
        return self.psi.grid

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0):
        return cls(ComplexField.zeros(grid), RealField.zeros(grid), RealField.zeros(grid), time)


@dataclass(frozen=True)
class FirstOrderState:
    psi: ComplexField
    phi_plus: ComplexField
    phi_minus: ComplexField
    time: float = 0.0

    def __post_init__(self):
        g = self.psi.grid
        if self.phi_plus.grid != g or self.phi_minus.grid != g:
            raise GridMismatchError("state fields live on different grids")

    @property
    def grid(self) -> Grid:
        return self.psi.grid

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0):
        z = ComplexField.zeros(grid)
        return cls(z, z, z, time)

    @classmethod
    def from_arrays(cls, grid: Grid, psi, phi_plus, phi_minus, time: float = 0.0):
        return cls(ComplexField(grid, psi), ComplexField(grid, phi_plus),
                   ComplexField(grid, phi_minus), time)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.psi.coeffs, self.phi_plus.coeffs, self.phi_minus.coeffs

    def __add__(self, other: "FirstOrderState") -> "FirstOrderState":
        return FirstOrderState(self.psi + other.psi, self.phi_plus + other.phi_plus,
                               self.phi_minus + other.phi_minus, self.time)

    def __sub__(self, other: "FirstOrderState") -> "FirstOrderState":
        return FirstOrderState(self.psi - other.psi, self.phi_plus - other.phi_plus,
                               self.phi_minus - other.phi_minus, self.time)

    def consistency_defect(self) -> float:
        """Relative mismatch between phi_- and the conjugate flip of phi_+."""
        g = self.grid
        diff = self.phi_minus.coeffs - g.conj_flip(self.phi_plus.coeffs)
        scale = max(np.max(np.abs(self.phi_plus.coeffs), initial=0.0),
                    np.max(np.abs(self.phi_minus.coeffs), initial=0.0))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(diff)) / scale)


@dataclass(frozen=True)
class ConservedQuantities:
    mass: float
    energy: float
    kinetic_psi: float
    kg_energy: float
    coupling_term: float
    time: float = 0.0

    def to_record(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in ("time", "mass", "energy", "kinetic_psi", "kg_energy", "coupling_term")}


def to_first_order(s: SecondOrderState) -> FirstOrderState:
    g = s.grid
    tail = 1j * s.phi_t.coeffs / g.bracket
    return FirstOrderState(
        s.psi.as_complex(),
        ComplexField(g, s.phi.coeffs + tail),
        ComplexField(g, s.phi.coeffs - tail),
        s.time,
    )


def to_second_order(s: FirstOrderState) -> SecondOrderState:
    g = s.grid
    defect = s.consistency_defect()
    if defect > CONSISTENCY_TOL:
        raise InconsistentStateError(f"first-order state is not real (defect {defect:.2e})")
    pp, pm = s.phi_plus.coeffs, s.phi_minus.coeffs
    phi = 0.5 * (pp + pm)
    phi_t = -0.5j * g.bracket * (pp - pm)
    return SecondOrderState(
        s.psi, RealField.symmetrized(g, phi), RealField.symmetrized(g, phi_t), s.time
    )


def rhs_first_order(s: FirstOrderState, coupling: float = 1.0, dealias: bool = False):
    """Time derivatives (psi_t, phi_+,t, phi_-,t) as coefficient arrays."""
    psi, pp, pm = s.arrays()
    return rhs_arrays(s.grid, psi, pp, pm, coupling, dealias)


def rhs_arrays(grid: Grid, psi, pp, pm, coupling: float = 1.0, dealias: bool = False):
    dpsi = -1j * grid.k2 * psi
    dpp = -1j * grid.bracket * pp
    dpm = 1j * grid.bracket * pm
    if coupling:
        npsi, npp, npm = nonlinear_arrays(grid, psi, pp, pm, coupling, dealias)
        dpsi, dpp, dpm = dpsi + npsi, dpp + npp, dpm + npm
    return dpsi, dpp, dpm


def linear_symbols(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonal generators of the free flow: -i|k|^2, -i<k>, +i<k>."""
    return -1j * grid.k2, -1j * grid.bracket, 1j * grid.bracket


def nonlinear_arrays(grid: Grid, psi, pp, pm, coupling: float = 1.0, dealias: bool = False):
    """Interaction part of the first-order right-hand side."""
    phi = 0.5 * (pp + pm)
    npsi = 1j * coupling * product_coeffs(grid, phi, psi, dealias)
    forcing = 1j * coupling * density_coeffs(grid, psi, dealias) / grid.bracket
    return npsi, forcing, -forcing


def mass(psi: ComplexField) -> float:
    return float(np.linalg.norm(psi.coeffs))


def density_values(grid: Grid, psi: np.ndarray) -> np.ndarray:
    return np.abs(grid.to_grid(psi)) ** 2


def density_coeffs(grid: Grid, psi: np.ndarray, dealias: bool = False) -> np.ndarray:
    """Coefficients of |psi|^2 (conj(psi) has coefficients conj_flip(psihat))."""
    if not dealias:
        return grid.from_grid(density_values(grid, psi))
    return product_coeffs(grid, psi, grid.conj_flip(psi), dealias=True)


def coupling_integral(grid: Grid, psi: np.ndarray, phi: np.ndarray, dealias: bool = False) -> float:
    """int |psi|^2 phi dx by grid quadrature (optionally on the 3/2-padded grid)."""
    if dealias:
        m = 3 * grid.n // 2
        vals = np.abs(padded_values(grid, psi, m)) ** 2 * padded_values(grid, phi, m).real
        return float(np.sum(vals) * (grid.length / m) ** grid.dim)
    return grid.integrate(density_values(grid, psi) * grid.to_grid(phi).real)


def energy(s: SecondOrderState, coupling: float = 1.0, dealias: bool = False) -> ConservedQuantities:
    g = s.grid
    psi, phi, phi_t = s.psi.coeffs, s.phi.coeffs, s.phi_t.coeffs
    kinetic = float(np.sum(g.k2 * np.abs(psi) ** 2))
    kg = 0.5 * float(np.sum(g.bracket**2 * np.abs(phi) ** 2)) + 0.5 * float(np.sum(np.abs(phi_t) ** 2))
    coup = coupling * coupling_integral(g, psi, phi, dealias)
    return ConservedQuantities(
        mass=mass(s.psi),
        energy=kinetic + kg - coup,
        kinetic_psi=kinetic,
        kg_energy=kg,
        coupling_term=coup,
        time=s.time,
    )


def first_order_quantities(s: FirstOrderState, coupling: float = 1.0) -> ConservedQuantities:
    return energy(to_second_order(s), coupling)


@dataclass(frozen=True)
class GNCheck:
    lhs: float
    rhs: float
    holds: bool


def gn_check(s: SecondOrderState, c1: float) -> GNCheck:
    """Compare |int |psi|^2 phi| with 1/4 ||A^{1/2} phi||^2 + 1/2 ||grad psi||^2 + c1 ||psi||^6."""
    if not c1 > 0:
        raise ValueError(f"c1 must be positive, got {c1}")
    g = s.grid
    lhs = abs(coupling_integral(g, s.psi.coeffs, s.phi.coeffs))
    a_phi = float(np.sum(g.bracket**2 * np.abs(s.phi.coeffs) ** 2))
    grad_psi = float(np.sum(g.k2 * np.abs(s.psi.coeffs) ** 2))
    rhs = 0.25 * a_phi + 0.5 * grad_psi + c1 * mass(s.psi) ** 6
    return GNCheck(lhs, rhs, lhs <= rhs)


def calibrate_c1(states, safety: float = 1.5) -> float:
    """Smallest c1 (times ``safety``) making gn_check hold on the given states.

    Each state contributes (|int |psi|^2 phi| - 1/4||A^{1/2}phi||^2 - 1/2||grad psi||^2) / M^6.
    """
    worst = 0.0
    for s in states:
        g = s.grid
        m6 = mass(s.psi) ** 6
        if m6 == 0.0:
            continue
        lhs = abs(coupling_integral(g, s.psi.coeffs, s.phi.coeffs))
        slack = (lhs
                 - 0.25 * float(np.sum(g.bracket**2 * np.abs(s.phi.coeffs) ** 2))
                 - 0.5 * float(np.sum(g.k2 * np.abs(s.psi.coeffs) ** 2)))
        worst = max(worst, slack / m6)
    return safety * worst if worst > 0 else math.ulp(1.0)


@dataclass(frozen=True)
class AprioriBounds:
    psi_h1_bound: float
    kg_bound: float


def apriori_bounds(q: ConservedQuantities, c1: float) -> AprioriBounds:
    base = q.energy + c1 * q.mass**6
    return AprioriBounds(psi_h1_bound=2 * base, kg_bound=4 * base)
