import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quaddrift.errors import DerivativeUnavailable, IncompatibleDurations, InvalidInput
from quaddrift.signals import (
    Atom,
    ControlSignal,
    atom_hat,
    fit_step,
    fourier_transform,
    gn_ratio,
    iterated_primitive,
    sobolev_norm_int,
    sobolev_norm_neg,
    weighted_norm_theta,
)

T = 1.0
DT = 1.0 / 200

samples = st.lists(st.floats(-5, 5, allow_nan=False), min_size=201, max_size=201)


def signal(vals, T=T, dt=DT):
    return ControlSignal.from_samples(np.asarray(vals), T, dt)


def test_fourier_of_constant_matches_closed_form():
    u = ControlSignal.from_function(lambda t: np.ones_like(t), T, DT)
    xi = 3.7
    expect = (1 - np.exp(-1j * xi * T)) / (1j * xi)
    assert abs(fourier_transform(u, xi) - expect) < 1e-13


def test_atom_transform_agrees_with_samples_for_resolved_atom():
    a = Atom(1.0, 20.0, 0.5, lam=0.3, t0=0.25)
    u = ControlSignal.from_atoms([a], T, 1e-4)
    xi = np.array([0.0, 5.0, 20.0, 60.0])
    exact = atom_hat(a, xi)
    sampled = fourier_transform(u, xi, method="samples")
    assert np.max(np.abs(exact - sampled)) < 1e-5


@given(samples, samples, st.floats(-3, 3), st.floats(-3, 3), st.floats(-50, 50))
def test_fourier_is_linear(v1, v2, a, b, xi):
    u, w = signal(v1), signal(v2)
    lhs = fourier_transform(a * u + b * w, xi)
    rhs = a * fourier_transform(u, xi) + b * fourier_transform(w, xi)
    scale = 1 + abs(a * fourier_transform(u, xi)) + abs(b * fourier_transform(w, xi))
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(samples)
def test_plancherel_at_order_zero(vals):
    u = signal(vals)
    l2 = u.l2_norm()
    if l2 < 1e-8:
        return
    assert sobolev_norm_neg(u, 0.0) == pytest.approx(l2, rel=1e-4)


@settings(max_examples=8)
@given(samples, st.floats(0.05, 0.9), st.floats(0.05, 0.9))
def test_negative_norms_decrease_with_order(vals, s1, s2):
    u = signal(vals)
    if u.l2_norm() < 1e-6:
        return
    lo, hi = sorted((s1, s2))
    assert sobolev_norm_neg(u, lo, rtol=1e-2) >= sobolev_norm_neg(u, hi, rtol=1e-2) * (1 - 1e-9)


@given(samples, st.integers(1, 4))
def test_iterated_primitive_composes(vals, n):
    u = signal(vals)
    a = iterated_primitive(u, n)
    b = iterated_primitive(iterated_primitive(u, 1), n - 1)
    assert np.array_equal(a.cells, b.cells)


def test_primitive_of_linear_ramp_is_exact():
    u = ControlSignal.from_function(lambda t: t, T, DT)
    u2 = iterated_primitive(u, 2)
    t = np.linspace(0, T, 17)
    assert np.max(np.abs(u2(t) - t ** 3 / 6)) < 1e-14


def test_addition_requires_matching_durations():
    u = ControlSignal.zeros(1.0, 0.1)
    w = ControlSignal.zeros(2.0, 0.1)
    with pytest.raises(IncompatibleDurations):
        u + w


def test_fit_step_divides_horizon():
    dt = fit_step(0.7, 0.03)
    assert dt <= 0.03
    assert abs(round(0.7 / dt) * dt - 0.7) < 1e-12


def test_malformed_atom_is_rejected():
    with pytest.raises(InvalidInput):
        Atom(1.0, 10.0, -1.0)


def test_huge_frequency_atom_kept_in_log_space():
    a = Atom(1.0, math.inf, 0.25, log_omega=900.0)
    assert a.peak and a.ln_omega == 900.0
    u = ControlSignal(1.0, 1e-3, None, (a,))
    # |a^|^2 concentrates at +-omega: H^-s mass ~ (tau/2) omega^(-2s)
    val = sobolev_norm_neg(u, 0.25) ** 2
    assert val == pytest.approx(0.125 * math.exp(-0.5 * 900.0), rel=1e-6)


def test_sobolev_int_rejects_unresolved_derivative():
    u = ControlSignal.from_function(lambda t: np.sin(2000 * t), 1.0, 1e-3)
    with pytest.raises(Exception):
        sobolev_norm_int(u, 2)
    smooth = ControlSignal.from_function(lambda t: np.sin(2 * np.pi * t), 1.0, 1e-4)
    expect = math.sqrt(0.5 + 0.5 * (2 * math.pi) ** 2)
    assert sobolev_norm_int(smooth, 1) == pytest.approx(expect, rel=1e-3)


def test_weighted_norm_with_unit_weight_is_gamma_times_hs():
    u = ControlSignal.from_function(lambda t: np.sin(10 * t) * np.sin(np.pi * t) ** 2, 1.0, 1e-2)
    g = 1.3
    w = weighted_norm_theta(u, 0.3, lambda x: np.ones_like(x), gamma=g, rtol=1e-2)
    assert w == pytest.approx(g * sobolev_norm_neg(u, 0.3, rtol=1e-2) ** 2, rel=1e-6)


def test_gn_ratio_needs_derivatives():
    u = ControlSignal.from_function(np.sin, 1.0, 1e-2)
    with pytest.raises(DerivativeUnavailable):
        gn_ratio(u, 1)
    v = ControlSignal.from_atoms([Atom(1.0, 50.0, 1.0)], 1.0, 1e-4)
    assert gn_ratio(v, 1) > 0


def test_csv_round_trip(tmp_path):
    u = ControlSignal.from_function(np.cos, 1.0, 0.01)
    u.to_csv(tmp_path / "u.csv")
    back = ControlSignal.from_csv(tmp_path / "u.csv")
    assert np.array_equal(back.samples, u.samples)
