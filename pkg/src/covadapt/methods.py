"""Discrepancy measures and the sequential allocation driver.

Four ways to score the hypothetical assignment of the next subject:

* ``ps_discrepancy`` -- category-count imbalance over discretized covariates.
* ``nt_discrepancy`` -- distance of group means/SDs from the grand values,
  plus a group-size term.
* ``mh_discrepancy`` -- weighted difference of Gaussian kernel density
  estimates of each group's covariate distribution at the new subject.
* ``bkw_discrepancy`` -- the robust mean/variance-balancing objective in its
  closed form: the score of each candidate assignment is evaluated directly,
  with a per-step uncertainty radius inflating the contribution of subjects
  yet to arrive.

In every case a negative value means assigning to group one balances the
trial better; the biased coin then converts the sign into an assignment
probability. ``run_trial`` drives a whole trial: a permuted-block initial
cohort followed by sequential adaptive allocation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    GROUP_ONE,
    GROUP_TWO,
    CovariateMatrix,
    Method,
    MethodConfig,
    RngStream,
    Subject,
    TrialState,
    as_generator,
    biased_coin_decide,
    discretize_quantiles,
    empirical_moments,
    permuted_block_init,
    sample_sd,
    standardize,
    symmetric_sqrt,
)
from .errors import (
    DimensionMismatchError,
    EmptyGroupError,
    EmptyTrialError,
    GammaRangeError,
    MissingCategoriesError,
    OddTargetError,
    TrialFullError,
)

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Discrepancy:
    """Scalar imbalance score with its per-covariate decomposition.

    ``value == sum(per_covariate) + size_term`` by construction; the size
    term is nonzero only for the mean/SD method.
    """

    method: Method
    value: float
    per_covariate: tuple[float, ...]
    size_term: float = 0.0


@dataclass(frozen=True)
class BkwEvaluation:
    """Both candidate scores of the robust method at one step.

    ``w_prime`` and ``v`` hold the per-covariate mean and variance imbalance
    bounds for the preferred candidate; ``value`` is the group-one score
    minus the group-two score, so its sign feeds the usual coin rule.
    """

    gamma: float
    w_prime: tuple[float, ...]
    v: tuple[float, ...]
    d_group1: float
    d_group2: float

    @property
    def value(self) -> float:
        return self.d_group1 - self.d_group2

    @property
    def method(self) -> Method:
        return Method.BKW


@dataclass(frozen=True)
class AllocationRecord:
    """One allocation step: what was computed, what was drawn, what happened."""

    step: int
    subject_id: str
    method: Method
    phase: str  # "block" or "adaptive"
    group: int
    p_group1: float
    discrepancy: Discrepancy | BkwEvaluation | None
    coin_draw: float | None
    forced: bool = False

    @property
    def discrepancy_value(self) -> float | None:
        return None if self.discrepancy is None else self.discrepancy.value


# ---------------------------------------------------------------------------
# Discrepancy measures
# ---------------------------------------------------------------------------


def ps_discrepancy(state: TrialState, subject: Subject) -> Discrepancy:
    """Category-count discrepancy over the subject's discretized levels.

    For each covariate, compares the count gap that would result from
    putting the subject in group one versus group two at its level.
    """
    if subject.categories is None or state.category_counts is None:
        raise MissingCategoriesError("subject and state must carry discretized categories")
    counts = state.category_counts
    per = []
    for j, level in enumerate(subject.categories):
        n1 = int(counts[j, level - 1, 0])
        n2 = int(counts[j, level - 1, 1])
        per.append(float(abs(n1 + 1 - n2) - abs(n1 - (n2 + 1))))
    return Discrepancy(method=Method.PS, value=float(sum(per)), per_covariate=tuple(per))


def _pooled_sd(var_terms: np.ndarray, denom: int) -> np.ndarray:
    if denom < 1:
        return np.zeros_like(var_terms)
    return np.sqrt(np.maximum(var_terms, 0.0) / denom)


def nt_discrepancy(state: TrialState, subject: Subject) -> Discrepancy:
    """Mean/SD discrepancy: how far adding the subject moves each group's
    mean and SD from the grand values, compared across the two candidates,
    plus ``(n1 - n2) / (n1 + n2)`` to pull group sizes together."""
    n1, n2 = state.n1, state.n2
    n = n1 + n2
    if n == 0:
        raise EmptyTrialError("mean/SD discrepancy needs at least one allocated subject")
    g1 = state.group_values(GROUP_ONE)
    g2 = state.group_values(GROUP_TWO)
    w = subject.standardized
    p = state.n_covariates

    mean1 = g1.mean(axis=0) if n1 else np.zeros(p)
    mean2 = g2.mean(axis=0) if n2 else np.zeros(p)
    sd1 = sample_sd(g1) if n1 else np.zeros(p)
    sd2 = sample_sd(g2) if n2 else np.zeros(p)
    grand_mean = (n1 * mean1 + n2 * mean2) / n
    grand_sd = _pooled_sd((n1 - 1) * sd1**2 + (n2 - 1) * sd2**2, n - 2)

    def goodness(nk, mean_k, sd_k, values_k, n_other, mean_other, sd_other):
        new_mean = (nk * mean_k + w) / (nk + 1)
        joined = np.vstack([values_k, w[None, :]]) if nk else w[None, :]
        new_sd = sample_sd(joined)
        new_grand_mean = ((nk + 1) * new_mean + n_other * mean_other) / (n + 1)
        new_grand_sd = _pooled_sd(nk * new_sd**2 + (n_other - 1) * sd_other**2, n - 1)
        return (
            np.abs(new_mean - new_grand_mean)
            - np.abs(mean_k - grand_mean)
            + np.abs(new_sd - new_grand_sd)
            - np.abs(sd_k - grand_sd)
        )

    d1 = goodness(n1, mean1, sd1, g1, n2, mean2, sd2)
    d2 = goodness(n2, mean2, sd2, g2, n1, mean1, sd1)
    per = d1 - d2
    size_term = (n1 - n2) / n
    return Discrepancy(
        method=Method.NT,
        value=float(per.sum()) + size_term,
        per_covariate=tuple(float(x) for x in per),
        size_term=float(size_term),
    )


def kernel_density_estimate(sample: np.ndarray, x: np.ndarray | float) -> np.ndarray:
    """Gaussian-kernel density of a 1-D sample evaluated at ``x``.

    Uses bandwidth ``n ** -0.2`` for a sample of size n.
    """
    sample = np.atleast_1d(np.asarray(sample, dtype=float))
    n = sample.size
    if n == 0:
        raise EmptyGroupError(0)
    h = float(n) ** -0.2
    pts = np.atleast_1d(np.asarray(x, dtype=float))
    u = (pts[:, None] - sample[None, :]) / h
    dens = np.exp(-0.5 * u**2).sum(axis=1) / (n * h * SQRT_TWO_PI)
    return dens if np.ndim(x) else dens[0]


def mh_discrepancy(state: TrialState, subject: Subject) -> Discrepancy:
    """Kernel-density discrepancy: group-size-weighted difference between the
    estimated densities of each group at the subject's covariate values."""
    n1, n2 = state.n1, state.n2
    if n1 == 0:
        raise EmptyGroupError(GROUP_ONE)
    if n2 == 0:
        raise EmptyGroupError(GROUP_TWO)
    g1 = state.group_values(GROUP_ONE)
    g2 = state.group_values(GROUP_TWO)
    w = subject.standardized
    n = n1 + n2

    def density_at(values: np.ndarray) -> np.ndarray:
        nk = values.shape[0]
        h = float(nk) ** -0.2
        u = (w[None, :] - values) / h
        return np.exp(-0.5 * u**2).sum(axis=0) / (nk * h * SQRT_TWO_PI)

    per = (n1 / n) * density_at(g1) - (n2 / n) * density_at(g2)
    return Discrepancy(
        method=Method.MH,
        value=float(per.sum()),
        per_covariate=tuple(float(x) for x in per),
    )


def draw_gamma(config: MethodConfig, rng: RngStream | np.random.Generator) -> float:
    """Uniform draw of the per-step uncertainty radius from the configured range."""
    lo, hi = config.gamma_range
    return float(as_generator(rng).uniform(lo, hi))


def bkw_discrepancy(
    state: TrialState, subject: Subject, config: MethodConfig, gamma: float
) -> BkwEvaluation:
    """Closed-form robust score difference between the two candidate assignments.

    For each candidate the score is the per-covariate worst-case absolute
    mean difference plus ``rho`` times the square root of the worst-case
    absolute variance difference, where the worst case ranges over future
    subjects whose covariates may drift up to ``gamma`` (in units scaled by
    the current empirical covariance) from the running mean. The uncertainty
    contribution to a variance direction is switched off once the
    corresponding group cannot accept any future subject. Both candidate
    evaluations share the same ``gamma``.
    """
    target_n = state.target_n
    if target_n % 2 != 0:
        raise OddTargetError(f"robust method needs an even planned size, got {target_n}")
    lo, hi = config.gamma_range
    if not lo <= gamma <= hi:
        raise GammaRangeError(f"gamma {gamma} outside configured range [{lo}, {hi}]")
    t = state.step
    if t > target_n:
        raise TrialFullError(f"step {t} exceeds planned size {target_n}")

    prior = state.all_values()  # (t-1, p)
    w_t = subject.standardized
    mean, cov = empirical_moments(np.vstack([prior, w_t[None, :]]))
    v_norms = np.linalg.norm(symmetric_sqrt(cov), axis=1)

    p = state.n_covariates
    signs = np.where(state.groups() == GROUP_ONE, 1.0, -1.0)
    centered = prior - mean
    mean_imbalance = (centered * signs[:, None]).sum(axis=0)
    var_imbalance = (centered**2 * signs[:, None]).sum(axis=0)
    centered_t = w_t - mean
    remaining = target_n - t
    gamma_tilde = gamma**2 * remaining * p
    half = target_n // 2

    def score(x_t: int) -> tuple[float, np.ndarray, np.ndarray]:
        sign_t = 2 * x_t - 1
        w_prime = (2.0 / target_n) * (
            np.abs(mean_imbalance + centered_t * sign_t)
            + gamma * v_norms * remaining * math.sqrt(p)
        )
        group1_open = 1.0 if state.n1 + x_t <= half - 1 else 0.0
        group2_open = 1.0 if state.n2 + (1 - x_t) <= half - 1 else 0.0
        q = var_imbalance + centered_t**2 * sign_t
        v = np.maximum(
            (2.0 / target_n) * (q + gamma_tilde * v_norms**2 * group1_open),
            (2.0 / target_n) * (-q + gamma_tilde * v_norms**2 * group2_open),
        )
        total = float(w_prime.sum() + config.rho * np.sqrt(np.maximum(v, 0.0)).sum())
        return total, w_prime, v

    d1, w1, v1 = score(1)
    d2, w2, v2 = score(0)
    w_best, v_best = (w1, v1) if d1 <= d2 else (w2, v2)
    return BkwEvaluation(
        gamma=float(gamma),
        w_prime=tuple(float(x) for x in w_best),
        v=tuple(float(x) for x in v_best),
        d_group1=d1,
        d_group2=d2,
    )


# ---------------------------------------------------------------------------
# Allocation driver
# ---------------------------------------------------------------------------


def allocate_next(
    state: TrialState,
    subject: Subject,
    config: MethodConfig,
    rng: RngStream | np.random.Generator,
) -> tuple[AllocationRecord, TrialState]:
    """Score, coin-flip, and assign the next subject; returns the new state.

    The robust method runs a deterministic coin (``p0 = 1``) since its
    randomness comes from the per-step uncertainty draw, and it forces the
    assignment once a group holds half the planned subjects so the final
    split is exact.
    """
    if state.step > state.target_n:
        raise TrialFullError(f"trial already holds {state.n_allocated} of {state.target_n} subjects")
    gen = as_generator(rng)
    method = config.method
    if method is Method.PS:
        disc: Discrepancy | BkwEvaluation = ps_discrepancy(state, subject)
        p0 = config.p0
    elif method is Method.NT:
        disc = nt_discrepancy(state, subject)
        p0 = config.p0
    elif method is Method.MH:
        disc = mh_discrepancy(state, subject)
        p0 = config.p0
    else:
        disc = bkw_discrepancy(state, subject, config, draw_gamma(config, gen))
        p0 = 1.0

    forced_group = None
    if method is Method.BKW:
        half = state.target_n // 2
        if state.n1 >= half:
            forced_group = GROUP_TWO
        elif state.n2 >= half:
            forced_group = GROUP_ONE

    if forced_group is not None:
        group = forced_group
        p_group1 = 1.0 if group == GROUP_ONE else 0.0
        draw = None
    else:
        p_group1, group, draw = biased_coin_decide(disc.value, p0, gen)

    record = AllocationRecord(
        step=state.step,
        subject_id=subject.id,
        method=method,
        phase="adaptive",
        group=group,
        p_group1=p_group1,
        discrepancy=disc,
        coin_draw=draw,
        forced=forced_group is not None,
    )
    return record, state.with_assignment(subject, group)


def prepare_subjects(dataset: CovariateMatrix, config: MethodConfig) -> list[Subject]:
    """Standardize a full dataset and build its subjects in row order.

    Covariates are z-scaled against the whole dataset (the retrospective
    protocol); for the category-count method each column is additionally
    discretized at its empirical quantiles.
    """
    scaled, _ = standardize(dataset)
    categories = None
    if config.method is Method.PS:
        per_col = [discretize_quantiles(scaled.values[:, j], config.categories)[0] for j in range(scaled.n_cols)]
        categories = np.stack(per_col, axis=1)
    ids = dataset.row_ids()
    subjects = []
    for i in range(dataset.n_rows):
        subjects.append(
            Subject(
                id=ids[i],
                raw=dataset.values[i],
                standardized=scaled.values[i],
                categories=tuple(int(c) for c in categories[i]) if categories is not None else None,
            )
        )
    return subjects


def block_slot_probability(blocks: np.ndarray, index: int, block_size: int) -> float:
    """Conditional probability that slot ``index`` goes to group one, given
    the earlier draws in its block. The first slot of every block is 1/2."""
    start = (index // block_size) * block_size
    ones_used = int(np.sum(blocks[start:index] == GROUP_ONE))
    remaining_slots = block_size - (index - start)
    remaining_ones = block_size // 2 - ones_used
    return remaining_ones / remaining_slots


@dataclass(frozen=True)
class TrialResult:
    """Every allocation record of a completed trial plus the final state."""

    records: tuple[AllocationRecord, ...]
    state: TrialState

    def groups(self) -> np.ndarray:
        return self.state.groups()


def _normalize_order(arrival_order: Sequence[int], n: int) -> list[int]:
    order = [int(i) for i in arrival_order]
    if sorted(order) == list(range(n)):
        return order
    if sorted(order) == list(range(1, n + 1)):
        return [i - 1 for i in order]
    raise DimensionMismatchError(f"arrival order must be a permutation of the {n} subjects")


def run_trial(
    dataset: CovariateMatrix,
    arrival_order: Sequence[int],
    config: MethodConfig,
    rng: RngStream | np.random.Generator,
    block_rng: RngStream | np.random.Generator | None = None,
) -> TrialResult:
    """Run one complete trial over a dataset in the given arrival order.

    The first ``n0`` arrivals follow balanced permuted blocks; the rest go
    through the configured adaptive method. ``block_rng`` lets a simulation
    reuse one block randomization across methods for paired comparisons;
    by default it is derived from ``rng``.
    """
    if dataset.n_rows != config.target_n:
        raise DimensionMismatchError(
            f"dataset has {dataset.n_rows} rows but the plan expects {config.target_n}"
        )
    order = _normalize_order(arrival_order, dataset.n_rows)
    subjects = prepare_subjects(dataset, config)

    if isinstance(rng, RngStream):
        block_source: RngStream | np.random.Generator = rng.child(1)
        coin_gen = rng.child(2).generator()
    else:
        block_source = rng
        coin_gen = rng
    if block_rng is not None:
        block_source = block_rng

    blocks = permuted_block_init(config.n0, config.block_size, block_source)
    n_categories = config.categories if config.method is Method.PS else None
    state = TrialState.empty(config.target_n, dataset.n_cols, n_categories)
    records: list[AllocationRecord] = []

    for position, row in enumerate(order):
        subject = subjects[row]
        if position < config.n0:
            group = int(blocks[position])
            records.append(
                AllocationRecord(
                    step=state.step,
                    subject_id=subject.id,
                    method=config.method,
                    phase="block",
                    group=group,
                    p_group1=block_slot_probability(blocks, position, config.block_size),
                    discrepancy=None,
                    coin_draw=None,
                )
            )
            state = state.with_assignment(subject, group)
        else:
            record, state = allocate_next(state, subject, config, coin_gen)
            records.append(record)

    return TrialResult(records=tuple(records), state=state)


def allocation_digest(records: Sequence[AllocationRecord]) -> str:
    """Stable hash of the assignment sequence, for determinism checks."""
    payload = ";".join(f"{r.subject_id}:{r.group}" for r in records)
    return hashlib.sha256(payload.encode()).hexdigest()
