"""Periodic grids, Fourier coefficient fields and diagonal Fourier operators.

Fields are stored by their unitary Fourier coefficients on the torus
``[0, L)^d``::

    f(x) = L^{-d/2} * sum_k fhat(k) exp(i k.x)

so that ``||f||_{L^2} ** 2 == sum |fhat(k)| ** 2``.  Coefficient arrays use
numpy's FFT index order along every axis (0, 1, ..., n/2-1, -n/2, ..., -1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft


class InvalidFieldError(ValueError):
    """Coefficient array has the wrong shape or non-finite entries."""


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


class ParameterError(ValueError):
    """A numerical parameter is outside its admissible range."""


@dataclass(frozen=True)
class Grid:
    dim: int = 3
    n: int = 16
    length: float = 2 * math.pi

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ParameterError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 4 or self.n & (self.n - 1):
            raise ParameterError(f"n must be a power of two >= 4, got {self.n}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ParameterError(f"length must be positive, got {self.length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return (self.length / self.n) ** self.dim

    @cached_property
    def integer_modes(self) -> tuple[np.ndarray, ...]:
        """Integer lattice vectors, one broadcastable array per axis."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        return tuple(
            k.reshape([-1 if a == ax else 1 for a in range(self.dim)])
            for ax in range(self.dim)
        )

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        scale = 2 * math.pi / self.length
        return tuple(scale * k for k in self.integer_modes)

    @cached_property
    def k2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for k in self.wavenumbers:
            out = out + k**2
        return out

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def bracket(self) -> np.ndarray:
        """Japanese bracket <k> = (1 + |k|^2)^{1/2}."""
        return np.sqrt(1.0 + self.k2)

    @cached_property
    def _flip_index(self) -> tuple[np.ndarray, ...]:
        idx = (-np.arange(self.n)) % self.n
        return np.ix_(*([idx] * self.dim))

    def conj_flip(self, coeffs: np.ndarray) -> np.ndarray:
        """Return conj(c(-k)) with -k taken modulo the lattice."""
        return np.conj(coeffs[self._flip_index])

    def points(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.n) * (self.length / self.n)
        return tuple(
            x.reshape([-1 if a == ax else 1 for a in range(self.dim)])
            for ax in range(self.dim)
        )

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        """Physical-space samples of the field with the given coefficients."""
        scale = self.n**self.dim / self.length ** (self.dim / 2)
        return sfft.ifftn(coeffs, axes=range(-self.dim, 0)) * scale

    def from_grid(self, values: np.ndarray) -> np.ndarray:
        scale = self.length ** (self.dim / 2) / self.n**self.dim
        return sfft.fftn(values, axes=range(-self.dim, 0)) * scale

    def integrate(self, values: np.ndarray) -> float:
        """Rectangle-rule quadrature over the torus (exact for trig polynomials
        resolved by the grid)."""
        return float(np.sum(values) * self.cell_volume)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=complex)

    def lattice_radius(self) -> float:
        """Largest |k| present on the lattice (a cube corner)."""
        return float(self.kabs.max())


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise InvalidFieldError(
                f"coefficient shape {c.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise InvalidFieldError("field has non-finite coefficients")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid, grid.zeros())

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray):
        return cls(grid, grid.from_grid(values))

    def values(self) -> np.ndarray:
        return self.grid.to_grid(self.coeffs)

    def _check(self, other):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")

    def _wrap(self, coeffs, other=None):
        # real + real stays real; everything else degrades to complex
        if isinstance(self, RealField) and (other is None or isinstance(other, RealField)):
            return RealField(self.grid, coeffs)
        return ComplexField(self.grid, coeffs)

    def __add__(self, other: "ComplexField"):
        self._check(other)
        return self._wrap(self.coeffs + other.coeffs, other)

    def __sub__(self, other: "ComplexField"):
        self._check(other)
        return self._wrap(self.coeffs - other.coeffs, other)

    def __neg__(self):
        return self._wrap(-self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, ComplexField):
            return NotImplemented
        if isinstance(self, RealField) and np.isrealobj(scalar):
            return RealField(self.grid, self.coeffs * scalar)
        return ComplexField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def as_complex(self) -> "ComplexField":
        return ComplexField(self.grid, self.coeffs)

    def allclose(self, other: "ComplexField", rtol: float = 1e-12) -> bool:
        self._check(other)
        scale = max(np.linalg.norm(self.coeffs), np.linalg.norm(other.coeffs), 1e-300)
        return bool(np.linalg.norm(self.coeffs - other.coeffs) <= rtol * scale)


class RealField(ComplexField):
    """Field whose physical values are real: fhat(-k) = conj(fhat(k))."""

    SYMMETRY_RTOL = 1e-12

    def __post_init__(self):
        super().__post_init__()
        err = symmetry_defect(self.grid, self.coeffs)
        if err > self.SYMMETRY_RTOL:
            raise InvalidFieldError(f"conjugate symmetry violated (relative defect {err:.2e})")

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray):
        return cls(grid, grid.from_grid(np.real(values)))

    @classmethod
    def symmetrized(cls, grid: Grid, coeffs: np.ndarray):
        """Project arbitrary coefficients onto the real subspace."""
        return cls(grid, 0.5 * (coeffs + grid.conj_flip(coeffs)))


def symmetry_defect(grid: Grid, coeffs: np.ndarray) -> float:
    scale = np.max(np.abs(coeffs), initial=0.0)
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(coeffs - grid.conj_flip(coeffs))) / scale)


Symbol = Union[np.ndarray, float, complex, Callable[[Grid], np.ndarray]]


def _evaluate(symbol: Symbol, grid: Grid) -> np.ndarray:
    s = symbol(grid) if callable(symbol) else symbol
    s = np.asarray(s)
    if not np.all(np.isfinite(s)):
        raise ParameterError("symbol is not finite on the lattice")
    return s


def apply_multiplier(f: ComplexField, symbol: Symbol) -> ComplexField:
    """Diagonal Fourier operator: ghat(k) = symbol(k) fhat(k).

    ``symbol`` is an array broadcastable to the grid, a scalar, or a callable
    receiving the :class:`Grid`.  Real symbols that are even in ``k`` keep a
    :class:`RealField` real.
    """
    s = _evaluate(symbol, f.grid)
    out = s * f.coeffs
    if isinstance(f, RealField) and np.isrealobj(s):
        sym = np.broadcast_to(s, f.grid.shape)
        if np.array_equal(sym, f.grid.conj_flip(sym).real):
            return RealField(f.grid, out)
    return ComplexField(f.grid, out)


def bracket_power(alpha: float) -> Callable[[Grid], np.ndarray]:
    """Symbol of A^alpha with A = 1 - Laplacian."""
    return lambda grid: grid.bracket ** (2 * alpha)


def laplacian(grid: Grid) -> np.ndarray:
    return -grid.k2


def gradient_symbols(grid: Grid) -> tuple[np.ndarray, ...]:
    return tuple(1j * k for k in grid.wavenumbers)


def sobolev_norm(f: ComplexField, s: float) -> float:
    """(sum_k <k>^{2s} |fhat(k)|^2)^{1/2}."""
    if not math.isfinite(s):
        raise ParameterError(f"Sobolev index must be finite, got {s}")
    if not np.all(np.isfinite(f.coeffs)):
        raise InvalidFieldError("field has non-finite coefficients")
    return sobolev_norm_array(f.grid, f.coeffs, s)


def sobolev_norm_array(grid: Grid, coeffs: np.ndarray, s: float) -> float:
    w = np.abs(coeffs) ** 2
    if s != 0:
        w = w * grid.bracket ** (2 * s)
    return float(math.sqrt(np.sum(w)))


def l2_norm(f: ComplexField) -> float:
    return float(np.linalg.norm(f.coeffs))


def gradient_norm(f: ComplexField) -> float:
    """||grad f||_{L^2}."""
    return float(math.sqrt(np.sum(f.grid.k2 * np.abs(f.coeffs) ** 2)))


# -- Littlewood-Paley ---------------------------------------------------------

def _bump_tail(t):
    t = np.asarray(t, dtype=float)
    pos = t > 0
    out = np.zeros_like(t)
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_cutoff(r) -> np.ndarray:
    """C-infinity profile: 1 on [0, 1], 0 on [2, inf), monotone in between.

    chi(r) = e(2 - r) / (e(2 - r) + e(r - 1)) with e(t) = exp(-1/t) for t > 0.
    """
    r = np.asarray(r, dtype=float)
    a = _bump_tail(2.0 - r)
    b = _bump_tail(r - 1.0)
    return a / (a + b)


def dyadic_bump(grid: Grid, j: int) -> np.ndarray:
    """phi_j(k): chi(|k|) for j = 0, chi(|k|/2^j) - chi(|k|/2^{j-1}) otherwise."""
    if j < 0:
        raise ParameterError(f"dyadic index must be >= 0, got {j}")
    outer = smooth_cutoff(grid.kabs / 2.0**j)
    if j == 0:
        return outer
    return outer - smooth_cutoff(grid.kabs / 2.0 ** (j - 1))


def dyadic_project(f: ComplexField, j: int) -> ComplexField:
    return apply_multiplier(f, dyadic_bump(f.grid, j))


def dyadic_levels(grid: Grid) -> int:
    """Number of dyadic blocks needed to cover the whole lattice."""
    rmax = grid.lattice_radius()
    return max(1, int(math.ceil(math.log2(max(rmax, 1.0)))) + 1)


# -- sharp frequency cutoffs ----------------------------------------------------

def low_mask(grid: Grid, N: float) -> np.ndarray:
    """Closed ball |k| <= N (ties go to the low part)."""
    if not N >= 1:
        raise ParameterError(f"cutoff N must be >= 1, got {N}")
    # small slack so lattice points with |k| == N exactly are not lost to rounding
    return grid.k2 <= N * N * (1 + 1e-12)


def low_pass(f: ComplexField, N: float) -> ComplexField:
    return apply_multiplier(f, low_mask(f.grid, N).astype(float))


def high_pass(f: ComplexField, N: float) -> ComplexField:
    return apply_multiplier(f, (~low_mask(f.grid, N)).astype(float))


# -- products -------------------------------------------------------------------

def _pad_index(n: int, m: int, dim: int):
    k = np.fft.fftfreq(n, 1.0 / n).astype(int) % m
    return np.ix_(*([k] * dim))


def padded_values(grid: Grid, coeffs: np.ndarray, m: int) -> np.ndarray:
    """Physical samples of a coefficient array on a finer m-point grid."""
    big = np.zeros((m,) * grid.dim, dtype=complex)
    big[_pad_index(grid.n, m, grid.dim)] = coeffs
    return sfft.ifftn(big) * (m**grid.dim / grid.length ** (grid.dim / 2))


def truncate_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Coefficients of fine-grid samples, truncated back to the grid lattice."""
    m = values.shape[0]
    big = sfft.fftn(values) * (grid.length ** (grid.dim / 2) / m**grid.dim)
    return big[_pad_index(grid.n, m, grid.dim)]


def product_coeffs(grid: Grid, a: np.ndarray, b: np.ndarray, dealias: bool = False) -> np.ndarray:
    """Coefficients of the pointwise product of two fields.

    Without dealiasing the product is formed on the native grid (collocation).
    With ``dealias`` both factors are zero-padded by 3/2, which removes every
    aliased contribution from the retained modes of a quadratic product.
    """
    if not dealias:
        return grid.from_grid(grid.to_grid(a) * grid.to_grid(b))
    m = 3 * grid.n // 2
    return truncate_values(grid, padded_values(grid, a, m) * padded_values(grid, b, m))


def product(f: ComplexField, g: ComplexField, dealias: bool = False) -> ComplexField:
    f._check(g)
    c = product_coeffs(f.grid, f.coeffs, g.coeffs, dealias)
    if isinstance(f, RealField) and isinstance(g, RealField):
        return RealField.symmetrized(f.grid, c)
    return ComplexField(f.grid, c)
