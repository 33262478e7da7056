"""Time integration of the first-order KGS system.

* exact free propagators e^{it Lap} and e^{-+it A^{1/2}},
* a Strang splitting whose linear and nonlinear substeps are both solved
  exactly (the nonlinear one is a pointwise phase rotation of psi plus an
  affine drift of phi_pm, because phi and |psi|^2 are frozen along it),
* a Lawson (integrating factor) RK4 used as the reference integrator,
* a Picard iteration on the trapezoidal Duhamel formulation of the
  rough-part system.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import FirstOrderState, linear_symbols, nonlinear_arrays
from .spectral import ComplexField, Grid, ParameterError

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6


class NumericalAbort(RuntimeError):
    """A simulation had to stop; ``reason`` is a short machine-readable tag."""

    reason = "numerical-abort"


class BlowUpError(NumericalAbort):
    reason = "blow-up"


class IntervalTooLongError(NumericalAbort):
    """The Picard map failed to contract on the requested interval."""

    reason = "interval-too-long"


@dataclass(frozen=True)
class StepControl:
    h: float
    t_end: float
    picard_tol: float = 1e-10
    picard_max_iters: int = 50

    def __post_init__(self):
        if not (0 < self.h <= self.t_end * (1 + 1e-12)):
            raise ParameterError(f"need 0 < h <= t_end, got h={self.h}, t_end={self.t_end}")
        if not self.picard_tol > 0:
            raise ParameterError("picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise ParameterError("picard_max_iters must be >= 1")

    @property
    def steps(self) -> int:
        """Number of uniform steps covering [0, t_end] with step <= h."""
        return max(1, int(math.ceil(self.t_end / self.h - 1e-9)))

    @property
    def step(self) -> float:
        return self.t_end / self.steps


# -- free propagators -----------------------------------------------------------

def schrodinger_phase(grid: Grid, t: float) -> np.ndarray:
    return np.exp(-1j * t * grid.k2)


def kg_phase(grid: Grid, t: float, sign: int) -> np.ndarray:
    """Symbol of e^{-sign * i t A^{1/2}}; sign=+1 for phi_+, -1 for phi_-."""
    if sign not in (1, -1):
        raise ParameterError(f"sign must be +1 or -1, got {sign}")
    return np.exp(-sign * 1j * t * grid.bracket)


def schrodinger_propagate(f: ComplexField, t: float) -> ComplexField:
    return ComplexField(f.grid, schrodinger_phase(f.grid, t) * f.coeffs)


def kg_propagate(f: ComplexField, t: float, sign: int) -> ComplexField:
    return ComplexField(f.grid, kg_phase(f.grid, t, sign) * f.coeffs)


def free_evolve(s: FirstOrderState, t: float) -> FirstOrderState:
    g = s.grid
    return FirstOrderState(
        schrodinger_propagate(s.psi, t),
        kg_propagate(s.phi_plus, t, +1),
        kg_propagate(s.phi_minus, t, -1),
        s.time + t,
    )


# -- Strang splitting -----------------------------------------------------------

class StrangStepper:
    """Strang splitting on raw coefficient arrays with cached phases.

    The nonlinear substep is evaluated pointwise on the native grid, so it is
    an exact isometry of the discrete L^2 norm of psi.
    """

    def __init__(self, grid: Grid, h: float, coupling: float = 1.0):
        self.grid = grid
        self.h = h
        self.coupling = coupling
        self._es = schrodinger_phase(grid, h / 2)
        self._ek = kg_phase(grid, h / 2, +1)
        self._ekc = np.conj(self._ek)
        self._inv_bracket = 1.0 / grid.bracket

    def linear_half(self, psi, pp, pm):
        return self._es * psi, self._ek * pp, self._ekc * pm

    def nonlinear(self, psi, pp, pm, h):
        g = self.grid
        phi = g.to_grid(0.5 * (pp + pm)).real
        u = g.to_grid(psi) * np.exp(1j * h * self.coupling * phi)
        psi = g.from_grid(u)
        drift = 1j * h * self.coupling * g.from_grid(np.abs(u) ** 2) * self._inv_bracket
        return psi, pp + drift, pm - drift

    def step(self, psi, pp, pm):
        psi, pp, pm = self.linear_half(psi, pp, pm)
        if self.coupling:
            psi, pp, pm = self.nonlinear(psi, pp, pm, self.h)
        return self.linear_half(psi, pp, pm)


def strang_step(s: FirstOrderState, h: float, coupling: float = 1.0) -> FirstOrderState:
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    psi, pp, pm = StrangStepper(s.grid, h, coupling).step(*s.arrays())
    return FirstOrderState.from_arrays(s.grid, psi, pp, pm, s.time + h)


def strang_integrate(
    s: FirstOrderState,
    h: float,
    steps: int,
    coupling: float = 1.0,
    observer: Optional[Callable[[int, float, tuple], None]] = None,
    blowup_factor: float = BLOWUP_FACTOR,
) -> FirstOrderState:
    """Advance ``steps`` Strang steps; ``observer(j, t, arrays)`` sees every node."""
    stepper = StrangStepper(s.grid, h, coupling)
    arrays = s.arrays()
    ref = _state_norm(arrays)
    if observer is not None:
        observer(0, s.time, arrays)
    for j in range(1, steps + 1):
        arrays = stepper.step(*arrays)
        _guard(arrays, ref, blowup_factor, s.time + j * h)
        if observer is not None:
            observer(j, s.time + j * h, arrays)
    return FirstOrderState.from_arrays(s.grid, *arrays, time=s.time + steps * h)


def _state_norm(arrays) -> float:
    return float(math.sqrt(sum(np.vdot(a, a).real for a in arrays)))


def _guard(arrays, ref: float, factor: float, t: float):
    nrm = _state_norm(arrays)
    if not math.isfinite(nrm) or (ref > 0 and nrm > factor * ref):
        raise BlowUpError(f"state norm {nrm:.3e} exceeded {factor:g} x initial at t={t:.6g}")


# -- reference integrator ---------------------------------------------------------

def oracle_integrate(
    s: FirstOrderState,
    ctrl: StepControl,
    coupling: float = 1.0,
    dealias: bool = False,
    reverse: bool = False,
) -> FirstOrderState:
    """Integrating-factor (Lawson) RK4 in Fourier space over [0, ctrl.t_end].

    The stiff diagonal part is integrated exactly; the fourth-order scheme
    handles only the interaction terms.  With ``reverse`` the system is run
    backwards in time by the same amount.
    """
    g = s.grid
    h = ctrl.step * (-1 if reverse else 1)
    lin = linear_symbols(g)
    e_half = [np.exp(L * h / 2) for L in lin]
    e_full = [e * e for e in e_half]

    def N(u):
        if not coupling:
            return [np.zeros_like(u[0])] * 3
        return list(nonlinear_arrays(g, *u, coupling=coupling, dealias=dealias))

    u = list(s.arrays())
    ref = _state_norm(u)
    for j in range(ctrl.steps):
        n0 = N(u)
        v1 = [e * x for e, x in zip(e_half, u)]
        a = [e * x for e, x in zip(e_half, n0)]
        b = N([x + 0.5 * h * y for x, y in zip(v1, a)])
        c = N([x + 0.5 * h * y for x, y in zip(v1, b)])
        d = N([e * x + h * e * y for e, x, y in zip(e_half, v1, c)])
        u = [
            ef * x + (h / 6) * (ef * k1 + 2 * eh * (k2 + k3) + k4)
            for ef, eh, x, k1, k2, k3, k4 in zip(e_full, e_half, u, n0, b, c, d)
        ]
        _guard(u, ref, BLOWUP_FACTOR, s.time + (j + 1) * h)
    return FirstOrderState.from_arrays(g, *u, time=s.time + ctrl.steps * h)


# -- sampled trajectories -----------------------------------------------------------

@dataclass
class Trajectory:
    """First-order state samples at uniform times (coefficient arrays)."""

    grid: Grid
    times: np.ndarray
    psi: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray

    def state(self, j: int) -> FirstOrderState:
        return FirstOrderState.from_arrays(
            self.grid, self.psi[j], self.phi_plus[j], self.phi_minus[j], float(self.times[j])
        )

    def __len__(self):
        return len(self.times)


@dataclass
class Context:
    """Physical-space samples of a known background solution (psi, phi).

    ``phi`` is the real meson field (phi_+ + phi_-)/2.  ``None`` arrays stand
    for an identically zero background.
    """

    grid: Grid
    times: np.ndarray
    psi_values: Optional[np.ndarray] = None
    phi_values: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, grid: Grid, times) -> "Context":
        return cls(grid, np.asarray(times, dtype=float))

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "Context":
        g = traj.grid
        psi = np.stack([g.to_grid(c) for c in traj.psi])
        phi = np.stack([g.to_grid(0.5 * (a + b)).real for a, b in zip(traj.phi_plus, traj.phi_minus)])
        return cls(g, traj.times.copy(), psi, phi)

    @property
    def is_zero(self) -> bool:
        return self.psi_values is None


def strang_trajectory(
    s: FirstOrderState, h: float, steps: int, coupling: float = 1.0, as_context: bool = False
):
    """Integrate with Strang steps and keep every node.

    With ``as_context`` only physical-space (psi, phi) samples are stored,
    which is what the Duhamel solver consumes and needs half the memory.
    """
    g = s.grid
    times = s.time + h * np.arange(steps + 1)
    if as_context:
        psi_v = np.empty((steps + 1,) + g.shape, dtype=complex)
        phi_v = np.empty((steps + 1,) + g.shape)

        def keep(j, t, arrays):
            psi_v[j] = g.to_grid(arrays[0])
            phi_v[j] = g.to_grid(0.5 * (arrays[1] + arrays[2])).real
    else:
        store = [np.empty((steps + 1,) + g.shape, dtype=complex) for _ in range(3)]

        def keep(j, t, arrays):
            for buf, a in zip(store, arrays):
                buf[j] = a

    final = strang_integrate(s, h, steps, coupling, observer=keep)
    if as_context:
        return Context(g, times, psi_v, phi_v), final
    return Trajectory(g, times, *store), final


# -- Duhamel / Picard ---------------------------------------------------------------

@dataclass
class DuhamelSolution:
    """Samples of the rough-part solution and its inhomogeneous parts.

    psi, phi_plus, phi_minus hold (psi^, phi^_+, phi^_-) at every node; the
    Duhamel integrals are w(t) = psi^(t) - e^{it Lap} psi_02 and
    z_pm(t) = phi^_pm(t) - e^{-+it A^{1/2}} phi_0pm2.
    """

    grid: Grid
    times: np.ndarray
    psi: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    data: tuple
    iterations: int
    residuals: list = field(default_factory=list)

    def free(self, j: int):
        g, t = self.grid, float(self.times[j] - self.times[0])
        psi0, pp0, pm0 = self.data
        return (schrodinger_phase(g, t) * psi0, kg_phase(g, t, +1) * pp0, kg_phase(g, t, -1) * pm0)

    def w(self, j: int = -1) -> np.ndarray:
        j = j % len(self.times)
        return self.psi[j] - self.free(j)[0]

    def z(self, j: int = -1) -> tuple[np.ndarray, np.ndarray]:
        j = j % len(self.times)
        _, fp, fm = self.free(j)
        return self.phi_plus[j] - fp, self.phi_minus[j] - fm

    def state(self, j: int = -1) -> FirstOrderState:
        j = j % len(self.times)
        return FirstOrderState.from_arrays(
            self.grid, self.psi[j], self.phi_plus[j], self.phi_minus[j], float(self.times[j])
        )


def duhamel_solve(
    psi0: ComplexField,
    phi0p: ComplexField,
    phi0m: ComplexField,
    context: Context,
    ctrl: StepControl,
    coupling: float = 1.0,
) -> DuhamelSolution:
    """Solve the rough-part integral equations by Picard iteration.

    Unknowns (psi^, phi^_pm) evolve against the background (psi~, phi~) given
    by ``context``::

        psi^(t)    = e^{it Lap} psi_02        - i int_0^t e^{i(t-s) Lap} F(s) ds
        phi^_pm(t) = e^{-+it A^{1/2}} phi_0pm2 - i int_0^t e^{-+i(t-s) A^{1/2}} G_pm(s) ds

    with F = -(psi^ phi~ + psi^ phi^ + psi~ phi^) and
    G_pm = -+A^{-1/2}(|psi^|^2 + 2 Re(psi^ conj(psi~))), phi^ = (phi^_+ + phi^_-)/2.
    The integrals use the trapezoidal rule on the context nodes with exact
    propagator weights.  Iteration stops when the relative sup-over-nodes
    change drops below ``ctrl.picard_tol``.

    Raises IntervalTooLongError when the residual grows three times in a row
    or the iteration budget runs out.
    """
    g = psi0.grid
    if phi0p.grid != g or phi0m.grid != g or context.grid != g:
        raise ParameterError("rough data and context must share one grid")
    times = np.asarray(context.times, dtype=float)
    M = len(times) - 1
    if M < 1:
        raise ParameterError("context must hold at least two nodes")
    hs = np.diff(times)
    h = float(hs[0])
    if not np.allclose(hs, h, rtol=1e-9, atol=0):
        raise ParameterError("context nodes must be uniformly spaced")

    data = (psi0.coeffs, phi0p.coeffs, phi0m.coeffs)
    ps, kp, km = schrodinger_phase(g, h), kg_phase(g, h, +1), kg_phase(g, h, -1)
    inv_br = 1.0 / g.bracket

    shape = (M + 1,) + g.shape
    psi = np.empty(shape, dtype=complex)
    pp = np.empty(shape, dtype=complex)
    pm = np.empty(shape, dtype=complex)
    # initial iterate: free evolution of the rough data
    psi[0], pp[0], pm[0] = data
    for j in range(1, M + 1):
        psi[j], pp[j], pm[j] = ps * psi[j - 1], kp * pp[j - 1], km * pm[j - 1]

    sol = DuhamelSolution(g, times, psi, pp, pm, data, 0)
    if not coupling:
        return sol

    def forcing(j):
        u = g.to_grid(psi[j])
        phi_hat = g.to_grid(0.5 * (pp[j] + pm[j]))
        if context.is_zero:
            F = -coupling * u * phi_hat
            rho = np.abs(u) ** 2
        else:
            ut, ft = context.psi_values[j], context.phi_values[j]
            F = -coupling * (u * (ft + phi_hat) + ut * phi_hat)
            rho = np.abs(u) ** 2 + 2 * np.real(u * np.conj(ut))
        Gp = -coupling * g.from_grid(rho) * inv_br
        return g.from_grid(F), Gp, -Gp

    growth = 0
    prev_res = math.inf
    for it in range(1, ctrl.picard_max_iters + 1):
        diff = 0.0
        scale = 0.0
        fprev = None
        ipsi = ipp = ipm = None
        free = [data[0], data[1], data[2]]
        for j in range(M + 1):
            F, Gp, Gm = forcing(j)
            if j == 0:
                ipsi = np.zeros_like(F)
                ipp = np.zeros_like(F)
                ipm = np.zeros_like(F)
            else:
                fF, fGp, fGm = fprev
                ipsi = ps * ipsi + 0.5 * h * (ps * fF + F)
                ipp = kp * ipp + 0.5 * h * (kp * fGp + Gp)
                ipm = km * ipm + 0.5 * h * (km * fGm + Gm)
                free = [ps * free[0], kp * free[1], km * free[2]]
            fprev = (F, Gp, Gm)
            new = (free[0] - 1j * ipsi, free[1] - 1j * ipp, free[2] - 1j * ipm)
            for buf, val in zip((psi, pp, pm), new):
                diff = max(diff, float(np.linalg.norm(val - buf[j])))
                scale = max(scale, float(np.linalg.norm(val)))
                buf[j] = val
        res = diff / scale if scale > 0 else 0.0
        sol.residuals.append(res)
        sol.iterations = it
        log.debug("picard iteration %d: residual %.3e", it, res)
        if res < ctrl.picard_tol:
            return sol
        growth = growth + 1 if res > prev_res else 0
        if growth >= 3:
            raise IntervalTooLongError(
                f"Picard residual grew for 3 consecutive iterations (last {res:.3e})"
            )
        prev_res = res
    raise IntervalTooLongError(
        f"Picard iteration did not reach tol {ctrl.picard_tol:g} in {ctrl.picard_max_iters} iterations"
    )
