from __future__ import annotations

import math

import numpy as np
import pytest

from covadapt.core import RngStream
from covadapt.errors import DimensionMismatchError, EmptyGroupError
from covadapt.metrics import (
    build_report,
    correct_guess,
    energy_distance,
    energy_permutation_test,
    marginal_diffs,
)
from oracles import energy_oracle


# ---------------------------------------------------------------------------
# energy distance
# ---------------------------------------------------------------------------


def test_energy_identical_multisets_is_zero():
    g = np.array([[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]])
    assert abs(energy_distance(g, g.copy())) < 1e-12


def test_energy_single_points():
    assert energy_distance([[0.0]], [[1.0]]) == pytest.approx(2.0)


def test_energy_small_case_matches_pairwise_oracle():
    g1 = [[0.0, 0.0], [1.0, 1.0]]
    g2 = [[0.0, 1.0]]
    expected = energy_oracle(g1, g2)  # = 2 - sqrt(2)/2
    assert expected == pytest.approx(2.0 - math.sqrt(2.0) / 2.0)
    assert energy_distance(g1, g2) == pytest.approx(expected, abs=1e-12)


def test_energy_symmetric_exactly():
    rng = np.random.default_rng(15)
    for _ in range(50):
        g1 = rng.normal(size=(int(rng.integers(1, 8)), 3))
        g2 = rng.normal(size=(int(rng.integers(1, 8)), 3))
        assert energy_distance(g1, g2) == energy_distance(g2, g1)


def test_energy_rigid_motion_invariance():
    rng = np.random.default_rng(25)
    g1 = rng.normal(size=(6, 2))
    g2 = rng.normal(size=(5, 2))
    theta = 0.83
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    shift = np.array([3.0, -7.0])
    base = energy_distance(g1, g2)
    moved = energy_distance(g1 @ rot.T + shift, g2 @ rot.T + shift)
    assert abs(base - moved) < 1e-10


def test_energy_scale_homogeneity():
    rng = np.random.default_rng(35)
    g1 = rng.normal(size=(5, 3))
    g2 = rng.normal(size=(7, 3))
    base = energy_distance(g1, g2)
    for s in (0.1, 2.0, 13.5):
        assert energy_distance(s * g1, s * g2) == pytest.approx(s * base, rel=1e-12)


def test_energy_nonnegative_many_random_pairs():
    rng = np.random.default_rng(45)
    for _ in range(10_000):
        p = int(rng.integers(1, 4))
        g1 = rng.normal(size=(int(rng.integers(1, 7)), p))
        g2 = rng.normal(size=(int(rng.integers(1, 7)), p))
        assert energy_distance(g1, g2) >= -1e-12


def test_energy_rejects_bad_inputs():
    with pytest.raises(DimensionMismatchError):
        energy_distance([[0.0, 1.0]], [[1.0]])
    with pytest.raises(EmptyGroupError):
        energy_distance(np.empty((0, 2)), [[1.0, 1.0]])


# ---------------------------------------------------------------------------
# permutation test
# ---------------------------------------------------------------------------


def test_permutation_identical_groups_large_p():
    g = np.arange(8.0).reshape(4, 2)
    p = energy_permutation_test(g, g.copy(), permutations=199, rng=RngStream(1))
    assert p > 0.9


def test_permutation_separated_groups_small_p():
    rng = np.random.default_rng(55)
    g1 = rng.normal(0.0, 1.0, size=(10, 1))
    g2 = rng.normal(10.0, 1.0, size=(10, 1))
    p = energy_permutation_test(g1, g2, permutations=999, rng=RngStream(2))
    assert p <= 0.01


def test_permutation_p_value_bounds():
    rng = np.random.default_rng(65)
    for r in (1, 9, 99):
        g1 = rng.normal(size=(3, 2))
        g2 = rng.normal(size=(4, 2))
        p = energy_permutation_test(g1, g2, permutations=r, rng=RngStream(3))
        assert 1 / (r + 1) <= p <= 1.0


# ---------------------------------------------------------------------------
# correct guess
# ---------------------------------------------------------------------------


def test_cg_tie_before_single_adaptive_step():
    series, mean = correct_guess([1, 2, 1], 2)
    assert series == (0.5,)
    assert mean == 0.5


def test_cg_hand_computed_sequence():
    # sizes before steps 3..6: (1,1) (1,2) (2,2) (2,3); assignments 2,1,2,1
    series, mean = correct_guess([1, 2, 2, 1, 2, 1], 2)
    assert series == (0.5, 1.0, 0.5, 1.0)
    assert mean == 0.75


def test_cg_smaller_group_cases():
    # before the last step: n1=3, n2=5; assigning group 1 is the "correct" guess
    groups = [1, 2, 2, 1, 2, 2, 1, 2, 1]
    series, _ = correct_guess(groups, 8)
    assert series == (1.0,)
    # same sizes but group 2 receives: guess fails
    groups = [1, 2, 2, 1, 2, 2, 1, 2, 2]
    series, _ = correct_guess(groups, 8)
    assert series == (0.0,)


def test_cg_depends_only_on_group_trajectory():
    class Rec:
        def __init__(self, group):
            self.group = group
            self.noise = hash(group) * 17

    groups = [1, 2, 1, 1, 2, 2, 1, 2, 2, 1]
    a = correct_guess(groups, 4)
    b = correct_guess([Rec(g) for g in groups], 4)
    assert a == b


def test_cg_simple_randomization_calibrates_to_half():
    rng = np.random.default_rng(75)
    means = []
    for _ in range(2000):
        groups = rng.integers(1, 3, size=12)
        _, mean = correct_guess(groups, 4)
        means.append(mean)
    assert abs(float(np.mean(means)) - 0.5) < 0.02


def test_cg_rejects_bad_n0():
    with pytest.raises(DimensionMismatchError):
        correct_guess([1, 2], 2)


# ---------------------------------------------------------------------------
# marginal diffs and the assembled report
# ---------------------------------------------------------------------------


def test_marginal_diffs_identical_groups():
    g = np.array([[0.0, 1.0], [1.0, 3.0]])
    mean_diff, sd_diff, size_diff = marginal_diffs(g, g.copy())
    np.testing.assert_array_equal(mean_diff, [0.0, 0.0])
    np.testing.assert_array_equal(sd_diff, [0.0, 0.0])
    assert size_diff == 0


def test_marginal_diffs_values():
    g1 = np.full((10, 1), 0.4)
    g2 = np.full((8, 1), -0.1)
    mean_diff, _, size_diff = marginal_diffs(g1, g2)
    assert mean_diff[0] == pytest.approx(0.5)
    assert size_diff == 2


def test_build_report_assembles_everything():
    rng = np.random.default_rng(85)
    g1 = rng.normal(size=(6, 2))
    g2 = rng.normal(size=(6, 2))
    groups = [1, 2] * 6
    report = build_report(g1, g2, ["age", "weight"], records=groups, n0=4, permutations=99)
    assert report.group_sizes == (6, 6)
    assert report.abs_group_size_diff == 0
    assert len(report.cg_series) == 8
    assert report.energy is not None and report.energy >= -1e-12
    assert 0.01 <= report.energy_p_value <= 1.0
    assert 0.0 <= report.mean_cg <= 1.0
    payload = report.to_dict()
    assert payload["abs_mean_diff"].keys() == {"age", "weight"}


def test_build_report_empty_group_omits_energy():
    g1 = np.empty((0, 2))
    g2 = np.array([[1.0, 2.0]])
    report = build_report(g1, g2, ["a", "b"])
    assert report.energy is None
    assert report.cg_series == ()
    assert report.mean_cg is None
