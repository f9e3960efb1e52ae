"""Balance and allocation-randomness metrics for completed (or running) trials.

Marginal balance is the per-covariate absolute gap in group means and SDs.
Joint balance is the energy distance between the two groups' covariate
samples: nonnegative, zero only when the empirical distributions coincide,
and sensitive to the full joint distribution rather than one margin at a
time. Allocation randomness is summarized by the correct-guess series: how
often the convergence strategy (guess the smaller group) would have called
each adaptive assignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import RngStream, as_generator, sample_sd
from .errors import DimensionMismatchError, EmptyGroupError


def _as_group(matrix) -> np.ndarray:
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatchError("group samples must be 1-D or 2-D")
    return arr


def _pairwise_mean(a: np.ndarray, b: np.ndarray) -> float:
    diff = a[:, None, :] - b[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).mean())


def energy_distance(group1, group2) -> float:
    """Energy distance between two multivariate samples.

    ``2 E|X - Y| - E|X - X'| - E|Y - Y'|`` over the empirical distributions,
    with Euclidean norms. Arguments are canonicalized first so the result is
    bitwise identical under argument swap.
    """
    a, b = _as_group(group1), _as_group(group2)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(f"groups have {a.shape[1]} and {b.shape[1]} covariates")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyGroupError(1 if a.shape[0] == 0 else 2)
    if (b.shape, b.tobytes()) < (a.shape, a.tobytes()):
        a, b = b, a
    return 2.0 * _pairwise_mean(a, b) - _pairwise_mean(a, a) - _pairwise_mean(b, b)


def energy_permutation_test(
    group1,
    group2,
    permutations: int = 999,
    rng: RngStream | np.random.Generator = RngStream(0),
) -> float:
    """Permutation p-value for equality of the two joint distributions.

    Labels are reshuffled ``permutations`` times preserving group sizes;
    the p-value uses the add-one correction, so it lies in
    ``[1/(permutations+1), 1]``.
    """
    if permutations < 1:
        raise DimensionMismatchError("need at least one permutation")
    a, b = _as_group(group1), _as_group(group2)
    observed = energy_distance(a, b)
    pooled = np.vstack([a, b])
    n1 = a.shape[0]
    gen = as_generator(rng)
    exceed = 0
    for _ in range(permutations):
        perm = gen.permutation(pooled.shape[0])
        if energy_distance(pooled[perm[:n1]], pooled[perm[n1:]]) >= observed:
            exceed += 1
    return (1 + exceed) / (permutations + 1)


def correct_guess(records: Sequence, n0: int) -> tuple[tuple[float, ...], float]:
    """Correct-guess series over the adaptive steps and its mean.

    ``records`` is the full allocation sequence (anything exposing ``group``,
    or plain group labels). For each step after the initial cohort the entry
    is 1 when the smaller group received the subject, 0 when the larger one
    did, and 1/2 on a size tie.
    """
    groups = [r.group if hasattr(r, "group") else int(r) for r in records]
    if not 0 <= n0 < len(groups):
        raise DimensionMismatchError(f"n0={n0} must be smaller than the {len(groups)} records")
    n1 = n2 = 0
    series: list[float] = []
    for t, group in enumerate(groups, start=1):
        if t > n0:
            if n1 == n2:
                series.append(0.5)
            elif (n1 < n2 and group == 1) or (n1 > n2 and group == 2):
                series.append(1.0)
            else:
                series.append(0.0)
        if group == 1:
            n1 += 1
        else:
            n2 += 1
    return tuple(series), float(np.mean(series))


class MarginalDiffs(tuple):
    """(abs_mean_diff, abs_sd_diff, abs_group_size_diff) triple."""

    __slots__ = ()

    def __new__(cls, mean_diff, sd_diff, size_diff):
        return super().__new__(cls, (mean_diff, sd_diff, size_diff))

    @property
    def mean_diff(self) -> np.ndarray:
        return self[0]

    @property
    def sd_diff(self) -> np.ndarray:
        return self[1]

    @property
    def size_diff(self) -> int:
        return self[2]


def marginal_diffs(group1, group2) -> MarginalDiffs:
    """Componentwise |mean gap|, |SD gap| and the group-size gap.

    Follows the core conventions for degenerate groups: the SD of a group
    with at most one subject is 0, and the mean of an empty group is 0.
    """
    a, b = _as_group(group1), _as_group(group2)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(f"groups have {a.shape[1]} and {b.shape[1]} covariates")
    p = a.shape[1]
    mean_a = a.mean(axis=0) if a.shape[0] else np.zeros(p)
    mean_b = b.mean(axis=0) if b.shape[0] else np.zeros(p)
    return MarginalDiffs(
        np.abs(mean_a - mean_b),
        np.abs(sample_sd(a) - sample_sd(b)),
        abs(a.shape[0] - b.shape[0]),
    )


@dataclass(frozen=True)
class MetricReport:
    """Balance/randomness summary of one trial (possibly still recruiting)."""

    covariates: tuple[str, ...]
    group_sizes: tuple[int, int]
    abs_group_size_diff: int
    abs_mean_diff: tuple[float, ...]
    abs_sd_diff: tuple[float, ...]
    energy: float | None
    energy_p_value: float | None
    cg_series: tuple[float, ...]
    mean_cg: float | None

    def to_dict(self) -> dict:
        return {
            "covariates": list(self.covariates),
            "group_sizes": list(self.group_sizes),
            "abs_group_size_diff": self.abs_group_size_diff,
            "abs_mean_diff": {name: v for name, v in zip(self.covariates, self.abs_mean_diff)},
            "abs_sd_diff": {name: v for name, v in zip(self.covariates, self.abs_sd_diff)},
            "energy": self.energy,
            "energy_p_value": self.energy_p_value,
            "cg_series": list(self.cg_series),
            "mean_cg": self.mean_cg,
        }


def build_report(
    group1,
    group2,
    covariates: Sequence[str],
    records: Sequence | None = None,
    n0: int | None = None,
    permutations: int | None = None,
    rng: RngStream | np.random.Generator = RngStream(0),
) -> MetricReport:
    """Assemble the full metric report for two group samples.

    The energy distance (and optional permutation p-value) is reported only
    when both groups are nonempty; the correct-guess series requires the
    allocation records and the initial-cohort size.
    """
    a, b = _as_group(group1), _as_group(group2)
    mean_diff, sd_diff, size_diff = marginal_diffs(a, b)
    energy = p_value = None
    if a.shape[0] and b.shape[0]:
        energy = energy_distance(a, b)
        if permutations:
            p_value = energy_permutation_test(a, b, permutations, rng)
    series: tuple[float, ...] = ()
    mean_cg = None
    if records is not None and n0 is not None and len(records) > n0:
        series, mean_cg = correct_guess(records, n0)
    return MetricReport(
        covariates=tuple(covariates),
        group_sizes=(a.shape[0], b.shape[0]),
        abs_group_size_diff=int(size_diff),
        abs_mean_diff=tuple(float(x) for x in mean_diff),
        abs_sd_diff=tuple(float(x) for x in sd_diff),
        energy=energy,
        energy_p_value=p_value,
        cg_series=series,
        mean_cg=mean_cg,
    )
