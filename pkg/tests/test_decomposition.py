import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgs.decomposition import (
    RegularityParams,
    generate_rough_data,
    generate_rough_state,
    generate_smooth_state,
    low_part_energy,
    split_data,
    verify_split_scaling,
)
from kgs.fitting import fit_slope
from kgs.model import SecondOrderState
from kgs.spectral import (
    ComplexField,
    Grid,
    GridMismatchError,
    ParameterError,
    RealField,
    high_pass,
    l2_norm,
    low_pass,
    sobolev_norm,
)

from conftest import single_mode


@pytest.mark.parametrize("s,m,N,delta", [(0, 0.8, 4, 0.05), (0.8, 1.2, 4, 0.05),
                                         (0.8, 0.8, 0.5, 0.05), (0.8, 0.8, 4, 0)])
def test_params_validation(s, m, N, delta):
    with pytest.raises(ParameterError):
        RegularityParams(s, m, N, delta)


@pytest.mark.parametrize("s,m,ok", [(0.75, 0.75, False), (0.76, 0.75, True), (1, 0.71, True),
                                    (0.72, 0.72, False), (0.7, 1.0, False), (0.9, 0.65, False)])
def test_admissible_region(s, m, ok):
    assert RegularityParams(s, m, 4).admissible is ok


def test_sm_is_min():
    assert RegularityParams(0.9, 0.8, 4).sm == 0.8


# -- splitting -------------------------------------------------------------------------

def data_state(grid, seed=0):
    return generate_rough_state(grid, 0.75, 0.75, seed=seed)


def test_split_reconstructs_exactly(grid16):
    d = data_state(grid16)
    sp = split_data(d.psi, d.phi, d.phi_t, RegularityParams(0.75, 0.75, 4))
    assert np.array_equal((sp.psi01 + sp.psi02).coeffs, d.psi.coeffs)
    assert np.array_equal((sp.phi01 + sp.phi02).coeffs, d.phi.coeffs)
    assert np.array_equal((sp.phi11 + sp.phi12).coeffs, d.phi_t.coeffs)
    assert np.all(sp.psi01.coeffs * sp.psi02.coeffs == 0)
    assert isinstance(sp.phi01, RealField) and isinstance(sp.phi12, RealField)
    assert isinstance(sp.low_state(), SecondOrderState)


def test_split_supports(grid16):
    d = data_state(grid16)
    N = 3
    sp = split_data(d.psi, d.phi, d.phi_t, RegularityParams(0.75, 0.75, N))
    lo = grid16.kabs <= N
    for f in (sp.psi01, sp.phi01, sp.phi11):
        assert np.all(f.coeffs[~lo] == 0)
    for f in (sp.psi02, sp.phi02, sp.phi12):
        assert np.all(f.coeffs[lo] == 0)


def test_low_data_has_no_high_part(grid16):
    d = data_state(grid16)
    low = SecondOrderState(low_pass(d.psi, 3), low_pass(d.phi, 3), low_pass(d.phi_t, 3))
    sp = split_data(low.psi, low.phi, low.phi_t, RegularityParams(0.75, 0.75, 3))
    for f in (sp.psi02, sp.phi02, sp.phi12):
        assert np.all(f.coeffs == 0)


def test_boundary_mode_goes_low(grid16):
    z = RealField.zeros(grid16)
    sp = split_data(single_mode(grid16, (0, 3, 4)), z, z, RegularityParams(0.75, 0.75, 5))
    assert np.all(sp.psi02.coeffs == 0)
    assert sp.psi01.coeffs[0, 3, 4] == 1


def test_split_grid_mismatch(grid16):
    other = Grid(dim=3, n=8)
    with pytest.raises(GridMismatchError):
        split_data(ComplexField.zeros(grid16), RealField.zeros(other), RealField.zeros(grid16),
                   RegularityParams(0.75, 0.75, 4))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**20))
def test_low_part_bounded_and_high_part_monotone(seed):
    g = Grid(dim=3, n=16)
    f = generate_rough_data(g, 0.75, seed=seed)
    assert all(l2_norm(low_pass(f, N)) <= l2_norm(f) for N in (1, 2, 4, 8))
    highs = [l2_norm(high_pass(f, N)) for N in (1, 2, 3, 4, 6, 8, 12)]
    assert all(b <= a for a, b in zip(highs, highs[1:]))


def test_high_part_slope_over_wide_sweep():
    # N up to 64 needs a lattice whose radius comfortably exceeds it
    g = Grid(dim=3, n=256)
    f = generate_rough_data(g, 0.75, seed=0, style="deterministic")
    fit = fit_slope([(N, l2_norm(high_pass(f, N))) for N in (4, 8, 16, 32, 64)])
    assert fit.slope == pytest.approx(-0.75, abs=0.1)


# -- generators --------------------------------------------------------------------------

def test_deterministic_generator_normalized():
    g = Grid(dim=1, n=8)
    f = generate_rough_data(g, 0.75, style="deterministic")
    assert sobolev_norm(f, 0.75) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("style", ["random", "deterministic"])
def test_generator_is_reproducible(grid16, style):
    a = generate_rough_data(grid16, 0.8, seed=11, style=style)
    b = generate_rough_data(grid16, 0.8, seed=11, style=style)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_generator_seeds_differ(grid16):
    a = generate_rough_data(grid16, 0.8, seed=1)
    b = generate_rough_data(grid16, 0.8, seed=2)
    assert not np.allclose(a.coeffs, b.coeffs)


@pytest.mark.parametrize("bad", [0.0, 1.5, -0.2])
def test_generator_rejects_regularity(grid16, bad):
    with pytest.raises(ParameterError):
        generate_rough_data(grid16, bad)


def test_generator_rejects_style(grid16):
    with pytest.raises(ParameterError):
        generate_rough_data(grid16, 0.5, style="fractal")


def test_h1_norm_grows_with_resolution():
    # the H^1 norm of H^{0.75}-normalized data diverges as the lattice grows
    pts = []
    for n in (8, 16, 32, 64):
        g = Grid(dim=3, n=n)
        pts.append((n, sobolev_norm(generate_rough_data(g, 0.75, style="deterministic"), 1.0)))
    assert all(b[1] > a[1] for a, b in zip(pts, pts[1:]))
    assert fit_slope(pts).slope > 0


def test_real_generator_is_real(grid16):
    f = generate_rough_data(grid16, 0.75, seed=4, real=True)
    assert isinstance(f, RealField)
    assert sobolev_norm(f, 0.75) == pytest.approx(1.0)


def test_rough_state_regularities(grid16):
    d = generate_rough_state(grid16, 0.8, 0.9, seed=3)
    assert sobolev_norm(d.psi, 0.8) == pytest.approx(1.0)
    assert sobolev_norm(d.phi, 0.9) == pytest.approx(1.0)
    # phi_t = A^{1/2} g with ||g||_{H^m} = 1, so ||phi_t||_{H^{m-1}} = 1
    assert sobolev_norm(d.phi_t, 0.9 - 1) == pytest.approx(1.0)


def test_smooth_state_amplitude(grid16):
    s = generate_smooth_state(grid16, seed=1, amplitude=2.5)
    for f in (s.psi, s.phi, s.phi_t):
        assert l2_norm(f) == pytest.approx(2.5)


# -- scaling verification ----------------------------------------------------------------

def test_scaling_rejects_short_sweep(grid16):
    f = generate_rough_data(grid16, 0.75)
    with pytest.raises(ParameterError):
        verify_split_scaling(f, 0.75, 0.0, [2, 4])
    with pytest.raises(ParameterError):
        verify_split_scaling(f, 0.75, 0.0, [4, 2, 6])


def test_scaling_record_fields():
    g = Grid(dim=3, n=32)
    rec = verify_split_scaling(generate_rough_data(g, 0.75), 0.75, 1.0, [2, 4, 8])
    assert rec.low_applies and not rec.high_applies
    assert rec.expected_slope == pytest.approx(0.25)
    assert [r["N"] for r in rec.per_N] == [2.0, 4.0, 8.0]
    assert rec.slope == rec.slope_low


@pytest.mark.parametrize("style", ["random", "deterministic"])
def test_flat_scaling_when_l_equals_s(style):
    g = Grid(dim=3, n=64)
    rec = verify_split_scaling(generate_rough_data(g, 0.75, style=style), 0.75, 0.75, [4, 8, 16, 32])
    assert rec.slope_low == pytest.approx(0.0, abs=0.1)
    assert rec.slope_high == pytest.approx(0.0, abs=0.1)


def test_low_part_h1_scaling():
    g = Grid(dim=3, n=64)
    rec = verify_split_scaling(generate_rough_data(g, 0.75, style="deterministic"), 0.75, 1.0,
                               [4, 8, 16, 32])
    assert rec.slope_low == pytest.approx(0.25, abs=0.1)


def test_high_part_l2_scaling():
    g = Grid(dim=3, n=64)
    rec = verify_split_scaling(generate_rough_data(g, 0.75, style="deterministic"), 0.75, 0.0,
                               [4, 8, 16, 32])
    assert rec.slope_high == pytest.approx(-0.75, abs=0.1)


def test_low_part_energy_slope():
    g = Grid(dim=3, n=64)
    d = generate_rough_state(g, 0.75, 0.75, seed=0)
    pts = []
    for N in (4, 8, 16, 32):
        sp = split_data(d.psi, d.phi, d.phi_t, RegularityParams(0.75, 0.75, N))
        pts.append((N, low_part_energy(sp)))
    assert all(e > 0 for _, e in pts)
    assert fit_slope(pts).slope <= 2 * (1 - 0.75) + 0.2
