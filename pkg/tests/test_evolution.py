import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgs.decomposition import generate_smooth_state
from kgs.evolution import (
    BlowUpError,
    Context,
    IntervalTooLongError,
    StepControl,
    duhamel_solve,
    free_evolve,
    kg_propagate,
    oracle_integrate,
    schrodinger_propagate,
    strang_integrate,
    strang_step,
    strang_trajectory,
)
from kgs.model import FirstOrderState, mass, to_first_order
from kgs.spectral import ComplexField, Grid, ParameterError, sobolev_norm

from conftest import random_field, single_mode


def smooth_first_order(grid, seed=0, amplitude=1.0):
    return to_first_order(generate_smooth_state(grid, seed=seed, amplitude=amplitude))


def rel_diff(a: FirstOrderState, b: FirstOrderState) -> float:
    num = math.sqrt(sum(np.linalg.norm(x - y) ** 2 for x, y in zip(a.arrays(), b.arrays())))
    den = math.sqrt(sum(np.linalg.norm(x) ** 2 for x in a.arrays()))
    return num / den


@pytest.mark.parametrize("kwargs", [dict(h=0, t_end=1), dict(h=2, t_end=1),
                                    dict(h=0.1, t_end=1, picard_tol=0),
                                    dict(h=0.1, t_end=1, picard_max_iters=0)])
def test_step_control_validation(kwargs):
    with pytest.raises(ParameterError):
        StepControl(**kwargs)


def test_step_control_covers_interval():
    c = StepControl(0.3, 1.0)
    assert c.steps == 4 and c.step == pytest.approx(0.25)
    assert StepControl(0.25, 1.0).steps == 4


# -- propagators ---------------------------------------------------------------------

def test_propagators_at_time_zero(grid16, rng):
    f = random_field(grid16, rng)
    assert np.array_equal(schrodinger_propagate(f, 0.0).coeffs, f.coeffs)
    assert np.array_equal(kg_propagate(f, 0.0, 1).coeffs, f.coeffs)


def test_schrodinger_half_period(grid16):
    g = schrodinger_propagate(single_mode(grid16, (1, 0, 0)), math.pi)
    assert g.coeffs[1, 0, 0] == pytest.approx(-1.0, abs=1e-15)


def test_kg_half_period_at_zero_mode(grid16):
    g = kg_propagate(single_mode(grid16, (0, 0, 0)), math.pi, +1)
    assert g.coeffs[0, 0, 0] == pytest.approx(-1.0, abs=1e-15)


def test_kg_signs_are_inverse(grid16, rng):
    f = random_field(grid16, rng)
    g = kg_propagate(kg_propagate(f, 1.7, +1), 1.7, -1)
    assert g.allclose(f, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(t=st.floats(-50, 50), s=st.sampled_from([0.0, 0.7, 1.0]), seed=st.integers(0, 2**16))
def test_propagators_are_unitary(t, s, seed):
    g = Grid(dim=3, n=8)
    f = random_field(g, np.random.default_rng(seed))
    n0 = sobolev_norm(f, s)
    assert sobolev_norm(schrodinger_propagate(f, t), s) == pytest.approx(n0, rel=1e-12)
    for sign in (1, -1):
        assert sobolev_norm(kg_propagate(f, t, sign), s) == pytest.approx(n0, rel=1e-12)


# -- Strang ----------------------------------------------------------------------------

def test_strang_without_coupling_is_exact(grid16):
    s = smooth_first_order(grid16)
    out = strang_integrate(s, 0.01, 37, coupling=0.0)
    assert rel_diff(free_evolve(s, 0.37), out) < 1e-12


def test_strang_preserves_mass(grid16):
    s = smooth_first_order(grid16, amplitude=2.0)
    m0 = mass(s.psi)
    out = s
    for _ in range(25):
        out = strang_step(out, 0.02)
    assert abs(mass(out.psi) - m0) <= 1e-11 * m0
    assert out.time == pytest.approx(0.5)


def test_strang_rejects_bad_step(grid16):
    with pytest.raises(ParameterError):
        strang_step(FirstOrderState.zeros(grid16), 0.0)


def test_strang_local_error_order(grid16):
    s = smooth_first_order(grid16, amplitude=2.0)
    ref_steps = 64
    defects = []
    for h in (0.04, 0.02):
        one = strang_step(s, h)
        ref = strang_integrate(s, h / ref_steps, ref_steps)
        defects.append(rel_diff(ref, one))
    assert defects[0] / defects[1] == pytest.approx(8.0, rel=0.3)


def test_two_half_steps_vs_one_step(grid16):
    s = smooth_first_order(grid16, amplitude=2.0)
    d = []
    for h in (0.04, 0.02):
        d.append(rel_diff(strang_integrate(s, h / 2, 2), strang_step(s, h)))
    assert d[0] / d[1] == pytest.approx(8.0, rel=0.3)


def test_blowup_guard(grid16):
    s = smooth_first_order(grid16)
    with pytest.raises(BlowUpError):
        strang_integrate(s, 0.01, 5, blowup_factor=0.5)


# -- oracle ----------------------------------------------------------------------------

def test_oracle_without_coupling_is_exact(grid16):
    s = smooth_first_order(grid16)
    out = oracle_integrate(s, StepControl(1e-3, 0.2), coupling=0.0)
    assert rel_diff(free_evolve(s, 0.2), out) < 1e-10


def test_strang_converges_to_oracle(grid16):
    s = smooth_first_order(grid16)
    T = 0.5
    ref = oracle_integrate(s, StepControl(1e-3, T))
    errs = [rel_diff(ref, strang_integrate(s, h, int(round(T / h)))) for h in (0.02, 0.01)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_oracle_time_reversal(grid16):
    s = smooth_first_order(grid16)
    ctrl = StepControl(2e-3, 0.5)
    there = oracle_integrate(s, ctrl)
    back = oracle_integrate(there, ctrl, reverse=True)
    assert rel_diff(s, back) < 1e-6
    assert back.time == pytest.approx(0.0, abs=1e-12)


def test_oracle_dealiased_path_close_for_band_limited_data(grid16):
    # width-1 Gaussian spectrum: the aliased tail at |k| = 8 is ~e^{-32}
    s = to_first_order(generate_smooth_state(grid16, seed=0, amplitude=0.5, width=1.0))
    ctrl = StepControl(5e-3, 0.2)
    a = oracle_integrate(s, ctrl)
    b = oracle_integrate(s, ctrl, dealias=True)
    assert rel_diff(a, b) < 1e-6


# -- Duhamel ---------------------------------------------------------------------------

def test_duhamel_zero_data(grid16):
    z = ComplexField.zeros(grid16)
    ctx = Context.zeros(grid16, np.linspace(0, 0.5, 51))
    sol = duhamel_solve(z, z, z, ctx, StepControl(0.01, 0.5))
    assert sol.iterations == 1
    assert np.all(sol.psi == 0) and np.all(sol.w() == 0)
    assert all(np.all(a == 0) for a in sol.z())


def test_duhamel_integrals_vanish_at_start(grid16):
    rough = smooth_first_order(grid16, seed=5, amplitude=0.5)
    reg = smooth_first_order(grid16, seed=6)
    ctx, _ = strang_trajectory(reg, 0.01, 30, as_context=True)
    sol = duhamel_solve(rough.psi, rough.phi_plus, rough.phi_minus, ctx, StepControl(0.01, 0.3))
    assert np.all(sol.w(0) == 0)
    assert all(np.all(a == 0) for a in sol.z(0))
    assert np.linalg.norm(sol.w()) > 0


def test_duhamel_matches_strang_with_zero_context(grid16):
    rough = smooth_first_order(grid16, seed=2, amplitude=0.5)
    h, steps = 1e-3, 200
    ctx = Context.zeros(grid16, h * np.arange(steps + 1))
    sol = duhamel_solve(rough.psi, rough.phi_plus, rough.phi_minus, ctx, StepControl(h, h * steps))
    direct = strang_integrate(rough, h, steps)
    err = max(np.linalg.norm(a - b) for a, b in zip(sol.state().arrays(), direct.arrays()))
    assert err < 1e-6


def test_duhamel_residuals_contract(grid16):
    rough = smooth_first_order(grid16, seed=7, amplitude=0.5)
    reg = smooth_first_order(grid16, seed=8)
    ctx, _ = strang_trajectory(reg, 0.01, 40, as_context=True)
    sol = duhamel_solve(rough.psi, rough.phi_plus, rough.phi_minus, ctx, StepControl(0.01, 0.4))
    below = [r for r in sol.residuals if r < 1]
    assert all(b < a for a, b in zip(below, below[1:]))
    assert sol.residuals[-1] < 1e-10


def test_duhamel_reports_long_interval(grid16):
    rough = smooth_first_order(grid16, seed=9, amplitude=20.0)
    reg = smooth_first_order(grid16, seed=10, amplitude=20.0)
    ctx, _ = strang_trajectory(reg, 0.01, 200, as_context=True)
    with pytest.raises(IntervalTooLongError, match="grew"):
        duhamel_solve(rough.psi, rough.phi_plus, rough.phi_minus, ctx, StepControl(0.01, 2.0))


def test_duhamel_reports_exhausted_budget(grid16):
    rough = smooth_first_order(grid16, seed=11, amplitude=0.5)
    ctx = Context.zeros(grid16, 0.01 * np.arange(21))
    with pytest.raises(IntervalTooLongError, match="did not reach"):
        duhamel_solve(rough.psi, rough.phi_plus, rough.phi_minus, ctx,
                      StepControl(0.01, 0.2, picard_max_iters=2))


def test_duhamel_needs_uniform_nodes(grid16):
    z = ComplexField.zeros(grid16)
    ctx = Context.zeros(grid16, [0.0, 0.1, 0.3])
    with pytest.raises(ParameterError):
        duhamel_solve(z, z, z, ctx, StepControl(0.1, 0.3))
