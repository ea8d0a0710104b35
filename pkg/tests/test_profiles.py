import numpy as np
import pytest
from hypothesis import given, strategies as st

from quaddrift.errors import InsufficientHorizon, InvalidInput, NoPlateauFound
from quaddrift.profiles import (
    build_periodic_theta,
    build_sparse_theta_family,
    chi_eval,
    plateau_center,
)


def test_chi_is_the_trapezoid():
    x = np.array([-1, 0, 0.5, 1, 1.5, 2, 2.5, 3, 4])
    assert np.allclose(chi_eval(x), [0, 0, 0.5, 1, 1, 1, 0.5, 0, 0])


@given(st.floats(0.1, 3.0))
def test_profiles_are_bounded_and_lipschitz(L):
    profiles = [build_periodic_theta(L, strict=False)]
    profiles += build_sparse_theta_family(L, 3, 4, strict=False)
    x = np.linspace(0, 200 * L, 200_001)
    for p in profiles:
        y = p(x)
        assert np.max(np.abs(y)) <= 1.0
        slope = np.abs(np.diff(y)) / np.diff(x)
        assert np.max(slope) <= 1 / (2 * L) * (1 + 1e-9)


@given(st.floats(0.1, 2.0), st.integers(0, 4))
def test_sparse_family_has_disjoint_supports(L, K):
    fam = build_sparse_theta_family(L, K, K + 2, strict=False)
    x = np.linspace(0, 2 * L * fam[0].meta["round_ends"][-1], 100_001)
    active = np.array([np.abs(p(x)) > 0 for p in fam])
    assert np.all(active.sum(axis=0) <= 1)


def test_blocks_are_separated_by_positive_margins():
    L = 1.0
    fam = build_sparse_theta_family(L, 3, 5)
    spans = []
    for k, p in enumerate(fam):
        for b in p.blocks:
            spans.append((2 * L * b.start, 2 * L * (b.start + 3), k))
    spans.sort()
    for (a0, a1, ka), (b0, b1, kb) in zip(spans, spans[1:]):
        if ka != kb:
            assert b0 - a1 >= L


def test_algorithm_matches_round_ends():
    fam = build_sparse_theta_family(1.0, 3, 4)
    assert fam[0].meta["round_ends"] == (7, 28, 78, 180)
    assert [b.start for b in fam[0].blocks[::2]] == [0, 7, 28, 78]
    assert [b.start for b in fam[3].blocks[::2]] == [149]


def test_plateau_centers_are_flat():
    p = build_periodic_theta(0.25, strict=False)
    for sign in (1, -1):
        x = plateau_center(p, sign, 3.0)
        grid = np.linspace(x - p.L, x + p.L, 101)
        assert np.all(p(grid) == sign)
        assert x >= 3.0


def test_strict_mode_and_horizon_errors():
    with pytest.raises(InvalidInput):
        build_periodic_theta(0.5)
    with pytest.raises(InsufficientHorizon):
        build_sparse_theta_family(1.0, 3, 2)
    fam = build_sparse_theta_family(1.0, 1, 2)
    with pytest.raises(NoPlateauFound):
        plateau_center(fam[1], 1, 1e6)


def test_profile_csv_export(tmp_path):
    fam = build_sparse_theta_family(1.0, 1, 2)
    side = fam[1].to_csv(tmp_path / "theta1.csv")
    rows = (tmp_path / "theta1.csv").read_text().splitlines()
    assert rows[0] == "block_start,sign" and len(rows) == 3
    assert side.exists()
