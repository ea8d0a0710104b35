import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quaddrift.errors import BlowUpError, UnderResolvedControl
from quaddrift.kernels import KernelSpec, coefficients, quadratic_form_time
from quaddrift.signals import Atom, ControlSignal
from quaddrift.simulate import (
    SpectralField,
    drift_series,
    ibp_identity_check,
    measure_drift,
    simulate_linearized,
    simulate_nonlinear,
    simulate_second_order,
)
from quaddrift.system import example_spec

N = 12
T = 0.5
DT = T / 2000


def smooth(freq=2.0, T=T, dt=DT):
    return ControlSignal.from_function(
        lambda t: np.sin(math.pi * t / T) ** 2 * np.sin(2 * math.pi * freq * t / T), T, dt)


def test_free_evolution_is_exact_decay():
    spec = example_spec(1, N)
    z0 = np.random.default_rng(1).standard_normal(N + 1)
    tr = simulate_nonlinear(spec, z0, ControlSignal.zeros(T, DT))
    k = np.arange(N + 1)
    assert np.allclose(tr.final.coeffs, z0 * np.exp(-k ** 2 * T), rtol=1e-12, atol=1e-300)


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=N + 1, max_size=N + 1))
def test_energy_decreases_without_control(z0):
    spec = example_spec(1, N)
    tr = simulate_nonlinear(spec, np.array(z0), ControlSignal.zeros(0.2, 0.01))
    norms = tr.l2_norms()
    assert np.all(np.diff(norms) <= 1e-15)


def test_duhamel_for_linearized_system():
    spec = example_spec(1, N)
    u = smooth()
    z1 = simulate_linearized(spec, u, T, DT).final.coeffs
    from quaddrift import _exact
    k = np.arange(N + 1)
    mom = _exact.decay_moments(u.cells, u.dt, k ** 2)
    assert np.allclose(z1, spec.mu_coeffs * mom, atol=1e-13)


def test_lost_mode_vanishes_at_linear_order():
    spec = example_spec(1, N)
    tr = simulate_linearized(spec, smooth(), T, DT, save_every=10)
    assert np.max(np.abs(tr.coeffs[:, 0])) == 0.0


def test_expansion_error_is_cubic():
    spec = example_spec(1, N)
    base = smooth()
    amps = np.array([1e-1, 1e-2, 1e-3])
    errs = []
    for a in amps:
        u = a * base
        z = simulate_nonlinear(spec, np.zeros(N + 1), u).final.coeffs
        so = simulate_second_order(spec, u)
        z12 = so.final.coeffs + so.diagnostics["z1"][-1]
        errs.append(np.linalg.norm(z - z12))
    slope = np.polyfit(np.log(amps), np.log(errs), 1)[0]
    assert abs(slope - 3) < 0.1


def test_second_order_matches_kernel_form():
    spec = example_spec(1, N)
    u = smooth(dt=T / 8000)
    z2 = simulate_second_order(spec, u).final.coeffs[0]
    f = quadratic_form_time(KernelSpec(coefficients(spec, 0, N).c), u)
    assert abs(z2 - f) <= 1e-6 * abs(f)


def test_ibp_identity_on_finite_kernel(rng):
    k = KernelSpec(rng.standard_normal(20) / np.arange(1, 21) ** 6)
    u = ControlSignal.from_function(lambda t: np.cos(3 * t) + t ** 2, 1.0, 1e-3)
    for n in (1, 2):
        assert ibp_identity_check(k, u, n) < 1e-9


def test_drift_report_against_series():
    spec = example_spec(1, N)
    rep = measure_drift(spec, 1e-2 * smooth(), system="second_order", series_terms=10 ** 4)
    assert rep.a == pytest.approx(drift_series(coefficients(spec, 0, 10 ** 4), 1))
    assert rep.coefficient == pytest.approx(rep.drift / rep.un_l2_sq)
    assert '"system": "second_order"' in rep.to_json()


def test_resolution_and_blow_up_guards():
    spec = example_spec(1, N)
    fast = ControlSignal.from_atoms([Atom(1.0, 500.0, 0.5)], 0.5, 1e-3, sample=False)
    with pytest.raises(UnderResolvedControl):
        simulate_nonlinear(spec, np.zeros(N + 1), fast)
    big = ControlSignal.from_function(lambda t: 400 + 0 * t, 1.0, 1e-3)
    with pytest.raises(BlowUpError), pytest.warns(RuntimeWarning):
        simulate_nonlinear(spec, np.ones(N + 1), big, bound=1e3)


def test_trajectory_csv_is_deterministic(tmp_path):
    spec = example_spec(1, 4)
    tr = simulate_nonlinear(spec, SpectralField.mode(4, 0, 1.0), smooth(T=0.1, dt=0.01))
    a = tr.to_csv(tmp_path / "a.csv").read_text()
    b = tr.to_csv(tmp_path / "b.csv").read_text()
    assert a == b and a.startswith("t,k,coeff")
