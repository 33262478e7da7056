"""Numerical probes of the bilinear Schroedinger x Klein-Gordon estimate and
discrete X^{s,b} norms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .evolution import kg_phase, schrodinger_phase
from .fitting import fit_slope, SlopeFit
from .spectral import ComplexField, Grid, ParameterError, dyadic_bump

__all__ = [
    "SpaceTimeField", "xsb_norm", "bilinear_probe", "bilinear_sweep", "fit_slope", "SlopeFit",
    "dispersion_symbol",
]

DISPERSIONS = ("schrodinger", "kg_plus", "kg_minus")


def dispersion_symbol(grid: Grid, dispersion: str) -> np.ndarray:
    """phi(k) of the free equation i u_t = phi(-i grad) u."""
    if dispersion == "schrodinger":
        return grid.k2
    if dispersion == "kg_plus":
        return grid.bracket
    if dispersion == "kg_minus":
        return -grid.bracket
    raise ParameterError(f"unknown dispersion {dispersion!r}")


def hann(times: np.ndarray, T_w: float) -> np.ndarray:
    return np.sin(np.pi * times / T_w) ** 2


def resolving_samples(omega_max: float, T_w: float) -> int:
    """Power-of-two sample count with pi nt / T_w >= 1.25 omega_max (at least 8)."""
    need = 1.25 * omega_max * T_w / np.pi
    return max(8, 1 << int(math.ceil(math.log2(max(need, 1.0)))))


@dataclass
class SpaceTimeField:
    """Coefficient samples f^(k, t_j) at uniform times t_j = j T_w / nt.

    The samples are periodic-sampled (endpoint excluded) so the discrete time
    transform sees one window; ``window`` names the taper applied before it.
    """

    grid: Grid
    T_w: float
    samples: np.ndarray
    window: str = "hann"

    def __post_init__(self):
        if self.samples.ndim != self.grid.dim + 1 or self.samples.shape[1:] != self.grid.shape:
            raise ParameterError("samples must have shape (nt,) + grid.shape")
        if self.samples.shape[0] < 8:
            raise ParameterError("need at least 8 time samples")
        if self.window not in ("hann", "none"):
            raise ParameterError(f"unknown window {self.window!r}")

    @property
    def nt(self) -> int:
        return self.samples.shape[0]

    @property
    def dt(self) -> float:
        return self.T_w / self.nt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt

    @classmethod
    def free(cls, f: ComplexField, dispersion: str, T_w: float = 8.0, nt: Optional[int] = None,
             window: str = "hann") -> "SpaceTimeField":
        """Samples of the free evolution e^{-it phi(-i grad)} f.

        The default ``nt`` is the smallest power of two whose Nyquist
        frequency exceeds every |phi(k)| on the lattice by 25%.
        """
        omega = dispersion_symbol(f.grid, dispersion)
        if nt is None:
            nt = resolving_samples(float(np.max(np.abs(omega))), T_w)
        t = np.arange(nt) * (T_w / nt)
        samples = np.exp(-1j * t.reshape((-1,) + (1,) * f.grid.dim) * omega) * f.coeffs
        return cls(f.grid, T_w, samples, window)

    def tapered(self) -> np.ndarray:
        if self.window == "none":
            return self.samples
        w = hann(self.times, self.T_w)
        return self.samples * w.reshape((-1,) + (1,) * self.grid.dim)

    def l2_norm(self) -> float:
        """Discrete L^2_{x,t} norm of the tapered samples."""
        return float(math.sqrt(self.dt * np.sum(np.abs(self.tapered()) ** 2)))


def xsb_norm(f: SpaceTimeField, s: float, b: float, dispersion: str = "schrodinger") -> float:
    """|| <k>^s <tau + phi(k)>^b F_{x,t} f ||, discrete and unitary in t.

    Uses F(k, tau) = sqrt(dt / nt) sum_j f(k, t_j) e^{-i tau t_j} on the grid
    tau = 2 pi fftfreq(nt, dt), so s = b = 0 reproduces ``f.l2_norm()``.
    """
    g = f.grid
    omega = dispersion_symbol(g, dispersion)
    spec = sfft.fft(f.tapered(), axis=0) * math.sqrt(f.dt / f.nt)
    dens = np.abs(spec) ** 2
    if s != 0:
        dens = dens * g.bracket ** (2 * s)
    if b != 0:
        tau = 2 * np.pi * np.fft.fftfreq(f.nt, f.dt)
        shift = tau.reshape((-1,) + (1,) * g.dim) + omega
        dens = dens * (1.0 + shift**2) ** b
    return float(math.sqrt(np.sum(dens)))


# -- bilinear probe -------------------------------------------------------------------

@dataclass(frozen=True)
class BilinearRecord:
    l: int
    m: int
    sign: int
    seed: int
    ratio: float
    bound_factor: float
    norm: float
    time_samples: int


def annulus_fits(grid: Grid, j: int) -> bool:
    kmax = (grid.n // 2) * 2 * math.pi / grid.length
    return j >= 0 and (j == 0 or 2.0 ** (j - 1) < kmax)


def draw_block(grid: Grid, j: int, rng: np.random.Generator, phases: str = "coherent") -> ComplexField:
    """Unit-L^2 random field supported in the j-th dyadic annulus.

    ``coherent`` draws random moduli with zero phase, so the block is focused
    at the origin at t = 0; ``random`` draws complex Gaussian coefficients.
    """
    if phases == "coherent":
        c = np.abs(rng.standard_normal(grid.shape)).astype(complex)
    elif phases == "random":
        c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    else:
        raise ParameterError(f"unknown phase model {phases!r}")
    c = c * dyadic_bump(grid, j)
    nrm = np.linalg.norm(c)
    return ComplexField(grid, c / nrm if nrm > 0 else c)


def default_time_samples(T_w: float, l: int, m: int) -> int:
    """Enough uniform samples to resolve the interaction time 2^{-(l+m)}."""
    dt = min(0.01, 2.0 ** (-(l + m) - 2))
    return int(math.ceil(T_w / dt)) + 1


def bilinear_probe(grid: Grid, l: int, m: int, sign: int = 1, T_w: float = 8.0, seed: int = 0,
                   psi1: Optional[ComplexField] = None, psi2: Optional[ComplexField] = None,
                   time_samples: Optional[int] = None, phases: str = "coherent") -> BilinearRecord:
    """Space-time L^2 norm of e^{it Lap} P_l psi1 * e^{-+it A^{1/2}} P_m psi2 on [0, T_w].

    The x-norm is the discrete grid norm of the product and the t-integral is
    the trapezoidal rule on ``time_samples`` uniform nodes including both ends.
    ratio = norm / (||P_l psi1|| ||P_m psi2||), bound_factor = ratio / 2^{m - l/2}.
    """
    for j in (l, m):
        if not annulus_fits(grid, j):
            raise ParameterError(f"dyadic annulus {j} lies outside the lattice of n={grid.n}")
    if sign not in (1, -1):
        raise ParameterError("sign must be +1 or -1")
    rng = np.random.default_rng([seed, l, m])
    if psi1 is None:
        psi1 = draw_block(grid, l, rng, phases)
    if psi2 is None:
        psi2 = draw_block(grid, m, rng, phases)
    a = dyadic_bump(grid, l) * psi1.coeffs
    b = dyadic_bump(grid, m) * psi2.coeffs
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    nt = time_samples or default_time_samples(T_w, l, m)
    if na == 0.0 or nb == 0.0:
        return BilinearRecord(l, m, sign, seed, 0.0, 0.0, 0.0, nt)

    times = np.linspace(0.0, T_w, nt)
    ps, pk = schrodinger_phase(grid, times[1]), kg_phase(grid, times[1], sign)
    vals = np.empty(nt)
    ua, vb = a.copy(), b.copy()
    for j in range(nt):
        if j:
            ua *= ps
            vb *= pk
        prod = grid.to_grid(ua) * grid.to_grid(vb)
        vals[j] = grid.integrate(np.abs(prod) ** 2)
    norm = float(math.sqrt(np.trapezoid(vals, times)))
    ratio = norm / (na * nb)
    return BilinearRecord(l, m, sign, seed, ratio, ratio / 2.0 ** (m - l / 2), norm, nt)


@dataclass
class BilinearSweep:
    rows: list
    slopes: dict

    def summary(self) -> dict:
        return {"slopes": self.slopes}


def bilinear_sweep(grid: Grid, ls: Sequence[int], ms: Sequence[int], sign: int = 1,
                   T_w: float = 8.0, seeds: Sequence[int] = (0,),
                   phases: str = "coherent") -> BilinearSweep:
    """Probe every (l, m) cell; fit log2(ratio) and log2(bound_factor) against l per m.

    Fits use only the cells with m <= l; all cells are reported.
    """
    rows = []
    for m in ms:
        for l in ls:
            for seed in seeds:
                rec = bilinear_probe(grid, l, m, sign, T_w, seed, phases=phases)
                rows.append(rec)
    slopes = {}
    for m in ms:
        cells = {}
        for r in rows:
            if r.m == m and r.l >= m and r.ratio > 0:
                cells.setdefault(r.l, []).append(r)
        if len(cells) < 3:
            continue
        ratio_pts, bound_pts = [], []
        for l, rs in sorted(cells.items()):
            gm = float(np.exp(np.mean([np.log(r.ratio) for r in rs])))
            ratio_pts.append((2.0**l, gm))
            bound_pts.append((2.0**l, gm / 2.0 ** (m - l / 2)))
        slopes[f"m={m}"] = {
            "ratio_slope": fit_slope(ratio_pts).slope,
            "bound_factor_slope": fit_slope(bound_pts).slope,
        }
    return BilinearSweep(rows, slopes)
