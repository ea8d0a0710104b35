import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quaddrift import _exact
from quaddrift.errors import InfeasibleConstraints, InvalidInput, LostDirectionError
from quaddrift.moments import (
    MomentProblem,
    basis_samples,
    lift_linear_invariant,
    linear_null_control,
    moment_weights,
    nonlinear_null_control,
    solve_moments,
)
from quaddrift.signals import ControlSignal
from quaddrift.simulate import simulate_linearized, simulate_nonlinear
from quaddrift.system import example_spec

DT = 1 / 2000


@settings(max_examples=10)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=6, max_size=6))
def test_residuals_are_remeasured_exactly(d):
    sol = solve_moments(MomentProblem(np.array(d), 1.0, 1), DT)
    k = sol.modes
    again = _exact.decay_moments(sol.control.cells, DT, k ** 2) - sol.targets
    assert np.array_equal(again, sol.residuals)
    assert sol.max_residual < 1e-9


def test_random_targets_meet_tolerance(rng):
    d = rng.standard_normal(13)
    sol = solve_moments(MomentProblem(d, 1.0, 1), DT)
    assert sol.max_residual < 1e-8
    assert sol.condition > 1


def test_moment_weights_agree_with_exact_moments(rng):
    s = rng.standard_normal(2001)
    u = ControlSignal.from_samples(s, 1.0, DT)
    rates = np.array([0.0, 1.0, 9.0, 100.0])
    w = moment_weights(1.0, DT, rates)
    assert np.allclose(w @ s, _exact.decay_moments(u.cells, DT, rates), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("m", [1, 2])
def test_endpoint_conditions(m):
    sol = solve_moments(MomentProblem([1.0, -0.5, 0.25], 1.0, m), DT)
    v = sol.control.samples
    assert v[0] == 0.0 and v[-1] == 0.0
    if m == 2:
        # vanishing first derivative: quadratic onset at both ends
        assert v[2] / v[1] == pytest.approx(4, rel=1e-2)
        assert v[-3] / v[-2] == pytest.approx(4, rel=1e-2)


def test_minimum_norm_within_the_basis_span(rng):
    T, m, dim = 1.0, 1, 24
    p = MomentProblem(rng.standard_normal(5), T, m, dim)
    sol = solve_moments(p, DT)
    S = basis_samples(T, DT, m, dim)
    B = moment_weights(T, DT, p.modes ** 2) @ S
    null = np.linalg.svd(B)[2][-1]
    base = sol.control.l2_norm()
    for eps in (1e-2, -1e-2, 1e-1):
        w = sol.control + ControlSignal.from_samples(eps * S @ null, T, DT)
        moments = _exact.decay_moments(w.cells, DT, p.modes ** 2)
        assert np.allclose(moments, p.targets, atol=1e-8)
        assert w.l2_norm() > base


def test_small_basis_is_infeasible():
    with pytest.raises(InfeasibleConstraints):
        solve_moments(MomentProblem(np.ones(10), 1.0, 1, basis_dim=8), DT)


def test_invalid_problem():
    with pytest.raises(InvalidInput):
        MomentProblem([], 1.0)
    with pytest.raises(InvalidInput):
        MomentProblem([1.0], -1.0)


def test_lost_direction_is_reported():
    spec = example_spec(1, 6)
    z0 = np.zeros(7)
    z0[0] = 1.0
    with pytest.raises(LostDirectionError):
        linear_null_control(spec, z0, 1.0)


def test_linear_null_control_steers_tracked_modes(rng):
    spec = example_spec(1, 8)
    z0 = np.zeros(9)
    z0[1:] = rng.standard_normal(8)
    sol = linear_null_control(spec, z0, 1.0, dt=DT)
    # exact linear evolution: free decay plus the Duhamel term
    k = np.arange(9)
    zT = np.exp(-k ** 2) * z0 + simulate_linearized(spec, sol.control).final.coeffs
    assert np.max(np.abs(zT[1:])) < 1e-8 * np.linalg.norm(z0)


def test_lift_removes_tracked_moments():
    spec = example_spec(1, 12)
    u = ControlSignal.from_function(lambda t: np.sin(math.pi * t) ** 2 * np.cos(9 * t), 1.0, DT)
    v = lift_linear_invariant(u, spec)
    assert v._meta["max_moment"] <= 1e-9
    assert v._meta["correction_l2"] > 0
    z1 = simulate_linearized(spec, v).final.coeffs
    assert np.max(np.abs(z1)) <= 1e-9


def test_nonlinear_null_control_converges():
    spec = example_spec(1, 8)
    z0 = np.zeros(9)
    z0[1], z0[3] = 1e-2, -5e-3
    u, tr, rep = nonlinear_null_control(spec, z0, 1.0, tol=1e-8, dt=DT)
    assert rep.converged
    assert np.linalg.norm(tr.coeffs[-1][rep.modes]) <= 1e-8 * np.linalg.norm(z0)
    again = simulate_nonlinear(spec, z0, u).final.coeffs
    assert np.allclose(again, tr.coeffs[-1])
    with pytest.raises(InvalidInput):
        nonlinear_null_control(spec, 10 * np.ones(9), 1.0)
