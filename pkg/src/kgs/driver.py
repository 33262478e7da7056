"""Interval-by-interval global construction with low/high data splitting.

On each interval of length |I| the regular (low-frequency) part is evolved
by the full nonlinear flow, the rough part is obtained from the Duhamel
system driven by the regular trajectory, and the smoother Duhamel pieces
w, z_pm are moved into the regular data for the next interval while the
rough data are replaced by their free evolutions.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .decomposition import RegularityParams, generate_rough_state, split_data
from .evolution import (
    BlowUpError,
    IntervalTooLongError,
    NumericalAbort,
    StepControl,
    duhamel_solve,
    free_evolve,
    strang_trajectory,
)
from .fitting import fit_slope, geometric_mean
from .model import (
    FirstOrderState,
    SecondOrderState,
    coupling_integral,
    energy,
    to_first_order,
    to_second_order,
)
from .spectral import ComplexField, Grid, ParameterError, sobolev_norm_array

log = logging.getLogger(__name__)

MAX_HALVINGS = 3


@dataclass(frozen=True)
class IntervalPlan:
    length: float
    count: int
    params: RegularityParams
    T: float


def interval_length(params: RegularityParams) -> float:
    """min(1, N^{-(4/3)(1 - s^m) - delta})."""
    expo = -(4.0 / 3.0) * (1.0 - params.sm) - params.delta
    return min(1.0, params.N**expo)


def plan_intervals(params: RegularityParams, T: float) -> IntervalPlan:
    if not T > 0:
        raise ParameterError(f"horizon T must be positive, got {T}")
    length = interval_length(params)
    return IntervalPlan(length, _count(T, length), params, T)


def _count(T: float, length: float) -> int:
    return max(1, int(math.ceil(T / length - 1e-12)))


@dataclass(frozen=True)
class IntervalRecord:
    index: int
    t_start: float
    length: float
    mass_regular: float
    energy_regular: float
    w_h1: float
    w_l2: float
    z_h1: float
    z_l2: float
    mass_increment: float
    energy_increment: float
    rough_h1_free: float
    energy_evolved: float = 0.0
    inc_gradient: float = 0.0
    inc_kg_field: float = 0.0
    inc_kg_velocity: float = 0.0
    inc_coupling_z: float = 0.0
    inc_coupling_phi: float = 0.0
    picard_iterations: int = 0

    def to_row(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def energy_expansion(self) -> float:
        """Signed sum of the five expansion terms; equals energy_regular - energy_evolved."""
        return (self.inc_gradient + self.inc_kg_field + self.inc_kg_velocity
                + self.inc_coupling_z + self.inc_coupling_phi)


@dataclass
class IterationLedger:
    plan: IntervalPlan
    records: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: Optional[str] = None
    halvings: list = field(default_factory=list)
    final_state: Optional[SecondOrderState] = None
    initial_mass: float = 0.0
    initial_energy: float = 0.0

    def summary(self) -> dict:
        return {
            "plan": {"length": self.plan.length, "count": self.plan.count, "T": self.plan.T},
            "params": dataclasses.asdict(self.plan.params),
            "intervals_completed": len(self.records),
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "halvings": self.halvings,
            "initial_mass": self.initial_mass,
            "initial_energy": self.initial_energy,
            "max_mass_increment": max((r.mass_increment for r in self.records), default=0.0),
            "max_energy_increment": max((r.energy_increment for r in self.records), default=0.0),
            "predicted_exponents": predicted_exponents(self.plan.params.sm, self.plan.params.s),
            # N-slopes need a sweep over cutoffs; see smoothing_study
            "slopes": {},
        }


@dataclass(frozen=True)
class EnergyIncrement:
    gradient: float
    kg_field: float
    kg_velocity: float
    coupling_z: float
    coupling_phi: float

    @property
    def total(self) -> float:
        return self.gradient + self.kg_field + self.kg_velocity + self.coupling_z + self.coupling_phi


def energy_increment_terms(old: SecondOrderState, w: np.ndarray, z: np.ndarray,
                           z_prime: np.ndarray, coupling: float = 1.0) -> EnergyIncrement:
    """Exact expansion of E(psi+w, phi+z, phi_t+z') - E(psi, phi, phi_t).

    Terms: gradient cross/square terms, the two Klein-Gordon pieces, the
    coupling integral against z, and phi against the change of |psi|^2.
    """
    g = old.grid
    psi, phi, phi_t = old.psi.coeffs, old.phi.coeffs, old.phi_t.coeffs
    br2 = g.bracket**2
    grad = float(np.sum(g.k2 * (2 * np.real(np.conj(psi) * w) + np.abs(w) ** 2)))
    kg_field = float(np.sum(br2 * (np.real(np.conj(phi) * z) + 0.5 * np.abs(z) ** 2)))
    kg_vel = float(np.sum(np.real(np.conj(phi_t) * z_prime) + 0.5 * np.abs(z_prime) ** 2))
    c_z = -coupling * coupling_integral(g, psi + w, z)
    new_density = np.abs(g.to_grid(psi + w)) ** 2
    old_density = np.abs(g.to_grid(psi)) ** 2
    c_phi = -coupling * g.integrate(g.to_grid(phi).real * (new_density - old_density))
    return EnergyIncrement(grad, kg_field, kg_vel, c_z, c_phi)


def _symmetrize(grid: Grid, c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + grid.conj_flip(c))


def run_interval(regular0: FirstOrderState, rough0: FirstOrderState, length: float,
                 ctrl: StepControl, coupling: float = 1.0, index: int = 0):
    """One step of the construction on [t0, t0 + length].

    Returns (regular1, rough1, record): regular1 = regular(|I|) + (w, z_pm)(|I|),
    rough1 = free evolution of the rough data.
    """
    g = regular0.grid
    if rough0.grid != g:
        raise ParameterError("regular and rough states must share one grid")
    local = StepControl(min(ctrl.h, length), length, ctrl.picard_tol, ctrl.picard_max_iters)
    steps, h = local.steps, local.step
    context, reg_end = strang_trajectory(regular0, h, steps, coupling, as_context=True)
    sol = duhamel_solve(rough0.psi, rough0.phi_plus, rough0.phi_minus, context,
                        StepControl(h, h * steps, ctrl.picard_tol, ctrl.picard_max_iters),
                        coupling)
    del context
    w = sol.w()
    zp, zm = sol.z()
    rough1 = free_evolve(rough0, length)
    rough1 = dataclasses.replace(rough1, time=regular0.time + length)
    regular1 = FirstOrderState.from_arrays(
        g, reg_end.psi.coeffs + w, reg_end.phi_plus.coeffs + zp, reg_end.phi_minus.coeffs + zm,
        time=regular0.time + length,
    )

    old = to_second_order(reg_end)
    new = to_second_order(regular1)
    z = _symmetrize(g, 0.5 * (zp + zm))
    z_prime = _symmetrize(g, -0.5j * g.bracket * (zp - zm))
    terms = energy_increment_terms(old, w, z, z_prime, coupling)
    q_new = energy(new, coupling)
    q_old = energy(old, coupling)

    m_old = float(np.linalg.norm(reg_end.psi.coeffs))
    record = IntervalRecord(
        index=index,
        t_start=regular0.time,
        length=length,
        mass_regular=q_new.mass,
        energy_regular=q_new.energy,
        w_h1=sobolev_norm_array(g, w, 1.0),
        w_l2=float(np.linalg.norm(w)),
        z_h1=sobolev_norm_array(g, z, 1.0),
        z_l2=float(np.linalg.norm(z)),
        mass_increment=abs(q_new.mass - m_old),
        energy_increment=abs(terms.total),
        rough_h1_free=sobolev_norm_array(g, rough1.psi.coeffs, 1.0),
        energy_evolved=q_old.energy,
        inc_gradient=terms.gradient,
        inc_kg_field=terms.kg_field,
        inc_kg_velocity=terms.kg_velocity,
        inc_coupling_z=terms.coupling_z,
        inc_coupling_phi=terms.coupling_phi,
        picard_iterations=sol.iterations,
    )
    return regular1, rough1, record


def run_global(psi0: ComplexField, phi0, phi1, params: RegularityParams, T: float,
               ctrl: StepControl, coupling: float = 1.0) -> IterationLedger:
    """Split the data at N and iterate run_interval up to time T.

    Intervals have the planned length except the last, which is shortened to
    land on T.  A Picard failure halves the length (at most three times);
    any other numerical failure aborts with a partial ledger.
    """
    split = split_data(psi0, phi0, phi1, params)
    plan = plan_intervals(params, T)
    full0 = SecondOrderState(psi0, phi0, phi1)
    q0 = energy(full0, coupling)
    ledger = IterationLedger(plan, initial_mass=q0.mass, initial_energy=q0.energy)

    regular = to_first_order(split.low_state())
    rough = to_first_order(split.high_state())
    length = plan.length
    t = 0.0
    index = 0
    halvings = 0
    while t < T * (1 - 1e-12):
        step = min(length, T - t)
        try:
            regular, rough, rec = run_interval(regular, rough, step, ctrl, coupling, index)
        except IntervalTooLongError as exc:
            if halvings >= MAX_HALVINGS:
                ledger.aborted = True
                ledger.abort_reason = f"{exc.reason}: {exc}"
                break
            halvings += 1
            length /= 2
            ledger.halvings.append({"interval": index, "length": length, "reason": str(exc)})
            ledger.plan = dataclasses.replace(plan, length=length,
                                              count=index + _count(T - t, length))
            log.info("interval %d: halving |I| to %.4g", index, length)
            continue
        except (BlowUpError, NumericalAbort) as exc:
            ledger.aborted = True
            ledger.abort_reason = f"{exc.reason}: {exc}"
            break
        ledger.records.append(rec)
        t += step
        index += 1

    total = regular + rough
    try:
        ledger.final_state = to_second_order(dataclasses.replace(total, time=t))
    except ValueError as exc:
        ledger.aborted = True
        ledger.abort_reason = ledger.abort_reason or f"inconsistent-state: {exc}"
    return ledger


# -- smoothing study ----------------------------------------------------------------

def predicted_exponents(sm: float, s: float) -> dict:
    """N-exponents for ||w||_{H^1}, ||w||_{L^2} and ||z||_{H^1} over one interval."""
    return {
        "w_h1": 5 / 6 - 4 / 3 * sm,
        "w_l2": 2 / 3 - 5 / 3 * sm,
        "z_h1": -1 / 3 - sm * (2 / 3 - 1 / (2 * s)),
    }


@dataclass
class StudyReport:
    params: RegularityParams
    rows: list
    per_N: list
    slopes: dict
    predicted: dict
    skipped: list

    @property
    def ratios(self) -> list:
        return [r["ratio"] for r in self.per_N]

    def ratio_strictly_decreasing(self) -> bool:
        r = self.ratios
        return all(b < a for a, b in zip(r, r[1:]))

    def summary(self) -> dict:
        return {
            "params": dataclasses.asdict(self.params),
            "slopes": self.slopes,
            "predicted_exponents": self.predicted,
            "ratio_strictly_decreasing": self.ratio_strictly_decreasing(),
            "skipped": self.skipped,
        }


def smoothing_study(params_base: RegularityParams, sweep: Sequence[float], seeds: Sequence[int],
                    grid: Grid, h: float, coupling: float = 1.0, style: str = "random",
                    picard_tol: float = 1e-10, picard_max_iters: int = 50) -> StudyReport:
    """One interval per (N, seed); fits log2-log2 slopes of the Duhamel parts.

    The same data (one draw per seed) is split at every N of the sweep.
    """
    sweep = [float(N) for N in sweep]
    if len(sweep) < 3:
        raise ParameterError("smoothing study needs at least 3 cutoffs")
    rows, skipped = [], []
    for seed in seeds:
        data = generate_rough_state(grid, params_base.s, params_base.m, seed=seed, style=style)
        for N in sweep:
            params = params_base.with_N(N)
            split = split_data(data.psi, data.phi, data.phi_t, params)
            length = interval_length(params)
            ctrl = StepControl(min(h, length), length, picard_tol, picard_max_iters)
            try:
                _, _, rec = run_interval(to_first_order(split.low_state()),
                                         to_first_order(split.high_state()),
                                         length, ctrl, coupling)
            except NumericalAbort as exc:
                skipped.append({"N": N, "seed": seed, "reason": f"{exc.reason}: {exc}"})
                continue
            rows.append({
                "N": N, "seed": seed, "length": length,
                "w_h1": rec.w_h1, "w_l2": rec.w_l2, "z_h1": rec.z_h1, "z_l2": rec.z_l2,
                "rough_h1_free": rec.rough_h1_free,
                "ratio": rec.w_h1 / rec.rough_h1_free if rec.rough_h1_free > 0 else math.nan,
                "picard_iterations": rec.picard_iterations,
            })
            log.info("smoothing cell N=%g seed=%d: w_h1=%.3e", N, seed, rec.w_h1)

    per_N = []
    for N in sweep:
        cell = [r for r in rows if r["N"] == N]
        if not cell:
            continue
        agg = {"N": N, "samples": len(cell)}
        for key in ("w_h1", "w_l2", "z_h1", "rough_h1_free", "ratio"):
            vals = [r[key] for r in cell]
            agg[key] = geometric_mean(vals) if all(v > 0 for v in vals) else math.nan
        per_N.append(agg)

    slopes = {}
    for key in ("w_h1", "w_l2", "z_h1", "ratio"):
        pts = [(a["N"], a[key]) for a in per_N if a[key] > 0]
        slopes[key] = fit_slope(pts).slope if len(pts) >= 3 else math.nan
    return StudyReport(params_base, rows, per_N, slopes,
                       predicted_exponents(params_base.sm, params_base.s), skipped)
