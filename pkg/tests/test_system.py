import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quaddrift.errors import AliasingError, InvalidInput
from quaddrift.kernels import coefficients
from quaddrift.profiles import build_periodic_theta, build_sparse_theta_family
from quaddrift.system import (
    basis_eval,
    check_regularity,
    cosine_moments,
    example2_alpha,
    example3_parameters,
    example_spec,
    from_grid,
    gamma_apply,
    lost_directions,
    make_affine,
    make_magic_infinite,
    make_magic_single,
    rho1,
    rho1_coeffs,
    rho2_coeffs,
    to_grid,
)

N = 12
states = st.lists(st.floats(-2, 2, allow_nan=False), min_size=N + 1, max_size=N + 1)


def test_basis_is_orthonormal():
    x, w = np.polynomial.legendre.leggauss(200)
    x = (x + 1) * math.pi / 2
    w = w * math.pi / 2
    B = np.array([basis_eval(k, x) for k in range(6)])
    assert np.allclose((B * w) @ B.T, np.eye(6), atol=1e-13)


def test_rho_coefficients_match_closed_forms():
    j = np.arange(1, 9)
    assert np.allclose(rho1_coeffs(8)[1:], 2 * math.sqrt(2 * math.pi) * (-1.0) ** j / j ** 2)
    assert np.allclose(rho2_coeffs(8)[1:], -2 * math.sqrt(2 * math.pi) * (2 * (-1.0) ** j + 1) / j ** 4)
    assert abs(rho1_coeffs(8)[0]) < 1e-14
    norms = np.r_[1 / math.sqrt(math.pi), np.full(8, math.sqrt(2 / math.pi))]
    assert np.allclose(norms * cosine_moments(rho1, 8), rho1_coeffs(8), atol=1e-12)


def test_grid_transforms_invert():
    c = np.random.default_rng(0).standard_normal(N + 1)
    assert np.allclose(from_grid(to_grid(c, 4 * N), N), c, atol=1e-12)


@given(states, states)
def test_gamma_is_affine(z1, z2):
    spec = example_spec(1, N)
    z1, z2 = np.array(z1), np.array(z2)
    g = lambda z: gamma_apply(spec, z).coeffs
    d = g(z1 + z2) - g(z1) - g(z2) + g(np.zeros(N + 1))
    assert np.max(np.abs(d)) <= 1e-12 * (1 + np.max(np.abs(g(z1))) + np.max(np.abs(g(z2))))


@given(states)
def test_matrix_and_grid_routes_agree(z):
    spec = example_spec(1, N)
    a = gamma_apply(spec, z, method="matrix").coeffs
    b = gamma_apply(spec, z, method="dct").coeffs
    # midpoint products converge at second order across the kinks of the data
    assert np.max(np.abs(a - b)) < 1e-5 * (1 + np.max(np.abs(z)))


@given(states)
def test_magic_single_retroaction_structure(z):
    spec = make_magic_single(build_periodic_theta(0.25, strict=False), 0.25, N)
    g = gamma_apply(spec, z).coeffs
    g0 = gamma_apply(spec, np.zeros(N + 1)).coeffs
    assert np.array_equal(g[1:], g0[1:])


@given(states)
def test_magic_infinite_even_modes_are_state_independent(z):
    fam = build_sparse_theta_family(0.25, 1, 2, strict=False)
    spec = make_magic_infinite(fam, 0.25, N)
    g = gamma_apply(spec, z).coeffs
    g0 = gamma_apply(spec, np.zeros(N + 1)).coeffs
    assert np.array_equal(g[0::2], g0[0::2])
    assert g0[0] == 1.0 and np.all(g0[1::2] == 0)


def test_example_one_kernel_constants():
    spec = example_spec(1, 16)
    c = coefficients(spec, 0, 16).c
    assert c[0] == pytest.approx(-8 * math.sqrt(math.pi), rel=1e-10)
    assert lost_directions(spec) == [0]


def test_example_two_cancels_first_moment():
    spec = example_spec(2, 200)
    c = coefficients(spec, 0, 200).c
    j = np.arange(1, 201)
    # the remaining tail of sum j^2 c_j is O(J^-3)
    assert abs(np.sum(j ** 2 * c)) < 1e-4
    assert example2_alpha() == pytest.approx(2 * math.sqrt(2 * math.pi) * math.pi ** 4 / 80, rel=1e-9)


def test_example_three_parameters():
    b, g = example3_parameters("integer")
    assert g == 0.0 and b != 0.0
    bf, gf = example3_parameters("fractional")
    assert gf != 0.0


def test_aliasing_guard():
    with pytest.raises(AliasingError):
        make_affine(lambda x: x, lambda x: x, 16, P=32)
    with pytest.raises(InvalidInput):
        make_magic_single(build_periodic_theta(0.25, strict=False), 1.5, 8)


def test_regularity_diagnostics_respect_operator_norm():
    spec = example_spec(1, N)
    rep = check_regularity(spec, rng=np.random.default_rng(3))
    assert not rep["flag"]
    assert rep["lipschitz_estimate"] <= rep["operator_norm"] * (1 + 1e-9)
    assert rep["second_difference"] < 1e-12


def test_spec_json_is_stable():
    a = example_spec(1, 8).to_json()
    b = example_spec(1, 8).to_json()
    assert a == b and '"variant": "affine"' in a
