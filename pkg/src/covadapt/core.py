"""Core types and primitives for two-arm covariate-adaptive allocation.

This module holds everything the allocation methods share: the covariate
containers, trial state bookkeeping, covariate preprocessing (z-scaling and
quantile discretization), the permuted-block initializer, the biased-coin
decision rule, dense linear-algebra helpers, and the seeded RNG contract.

All state objects are immutable; updates return new values. That keeps the
allocation core a pure function of (state, subject, randomness) and makes
replicated simulation and event-log replay trivially deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    BlockConfigError,
    CategoryCountError,
    ConstantColumnError,
    DimensionMismatchError,
    InvalidConfigError,
    NotPositiveSemidefiniteError,
)

GROUP_ONE = 1
GROUP_TWO = 2


class Method(str, Enum):
    """Allocation method selector."""

    PS = "ps"
    NT = "nt"
    MH = "mh"
    BKW = "bkw"

    @classmethod
    def parse(cls, raw: str) -> "Method":
        try:
            return cls(raw.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise InvalidConfigError({"method": f"unknown method {raw!r}; expected one of {valid}"})


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# RNG contract
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Key for an independent, reproducible random stream.

    ``(seed, stream_id)`` identifies the stream; replicate ``r`` of a
    simulation uses ``stream_id=r`` so replicates are independent and can run
    in parallel. ``path`` derives named substreams (block draws, coins, ...)
    without consuming from the parent.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        key = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.default_rng(key)

    def child(self, *key: int) -> "RngStream":
        return replace(self, path=self.path + key)


def as_generator(rng: "RngStream | np.random.Generator") -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


# ---------------------------------------------------------------------------
# Covariate containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovariateMatrix:
    """N subjects by p covariates, with column labels.

    Entries must be finite; labels must be distinct. ``ids`` optionally
    carries per-row subject identifiers from the source file.
    """

    values: np.ndarray
    names: tuple[str, ...]
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise DimensionMismatchError("covariate values must be a 2-D matrix")
        n, p = values.shape
        if n < 1 or p < 1:
            raise DimensionMismatchError("covariate matrix needs at least one row and one column")
        if not np.all(np.isfinite(values)):
            raise DimensionMismatchError("covariate values must all be finite")
        names = tuple(self.names)
        if len(names) != p:
            raise DimensionMismatchError(f"{len(names)} names for {p} columns")
        if len(set(names)) != len(names):
            raise InvalidConfigError({"covariates": "covariate names must be distinct"})
        if self.ids is not None and len(self.ids) != n:
            raise DimensionMismatchError(f"{len(self.ids)} ids for {n} rows")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def row_ids(self) -> tuple[str, ...]:
        if self.ids is not None:
            return self.ids
        return tuple(str(i + 1) for i in range(self.n_rows))


@dataclass(frozen=True)
class Subject:
    """One enrollee: raw covariates, the same on the z-scale, and optional
    discretized categories (present only when a discretization was applied)."""

    id: str
    raw: np.ndarray
    standardized: np.ndarray
    categories: tuple[int, ...] | None = None

    def __post_init__(self):
        raw = _frozen_array(self.raw)
        std = _frozen_array(self.standardized)
        if raw.ndim != 1 or std.ndim != 1 or raw.shape != std.shape:
            raise DimensionMismatchError("raw and standardized vectors must be 1-D and equal length")
        if self.categories is not None:
            cats = tuple(int(c) for c in self.categories)
            if len(cats) != raw.shape[0]:
                raise DimensionMismatchError("one category per covariate required")
            if any(c < 1 for c in cats):
                raise CategoryCountError("categories are 1-based")
            object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "standardized", std)

    @property
    def n_covariates(self) -> int:
        return self.raw.shape[0]


@dataclass(frozen=True)
class TrialState:
    """Allocation history of a running trial.

    ``assignments`` is the ordered sequence of (subject, group) pairs;
    ``step`` is the 1-based index of the next subject. ``category_counts``
    is the p x c x 2 occupancy tensor maintained when subjects carry
    discretized categories.
    """

    target_n: int
    n_covariates: int
    assignments: tuple[tuple[Subject, int], ...] = ()
    n1: int = 0
    n2: int = 0
    category_counts: np.ndarray | None = None

    @classmethod
    def empty(cls, target_n: int, n_covariates: int, n_categories: int | None = None) -> "TrialState":
        counts = None
        if n_categories is not None:
            counts = _frozen_array(np.zeros((n_covariates, n_categories, 2)), dtype=np.int64)
        return cls(target_n=target_n, n_covariates=n_covariates, category_counts=counts)

    @property
    def step(self) -> int:
        return len(self.assignments) + 1

    @property
    def n_allocated(self) -> int:
        return len(self.assignments)

    def with_assignment(self, subject: Subject, group: int) -> "TrialState":
        if group not in (GROUP_ONE, GROUP_TWO):
            raise DimensionMismatchError(f"group must be 1 or 2, got {group}")
        if subject.n_covariates != self.n_covariates:
            raise DimensionMismatchError(
                f"subject has {subject.n_covariates} covariates, trial expects {self.n_covariates}"
            )
        counts = self.category_counts
        if counts is not None and subject.categories is not None:
            updated = np.array(counts)
            for j, cat in enumerate(subject.categories):
                updated[j, cat - 1, group - 1] += 1
            counts = _frozen_array(updated, dtype=np.int64)
        return replace(
            self,
            assignments=self.assignments + ((subject, group),),
            n1=self.n1 + (group == GROUP_ONE),
            n2=self.n2 + (group == GROUP_TWO),
            category_counts=counts,
        )

    def group_values(self, group: int) -> np.ndarray:
        """Standardized covariate matrix (n_k x p) of one group."""
        rows = [s.standardized for s, g in self.assignments if g == group]
        if not rows:
            return np.empty((0, self.n_covariates))
        return np.stack(rows)

    def all_values(self) -> np.ndarray:
        if not self.assignments:
            return np.empty((0, self.n_covariates))
        return np.stack([s.standardized for s, _ in self.assignments])

    def groups(self) -> np.ndarray:
        return np.array([g for _, g in self.assignments], dtype=np.int64)


def sample_sd(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sample standard deviation (n-1 divisor), defined as 0 when n <= 1."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    if n <= 1:
        shape = list(values.shape)
        del shape[axis]
        return np.zeros(shape)
    return values.std(axis=axis, ddof=1)


@dataclass(frozen=True)
class GroupStats:
    """Per-group, per-covariate mean and sample SD. Row k-1 holds group k."""

    count: np.ndarray  # (2,)
    mean: np.ndarray  # (2, p)
    sd: np.ndarray  # (2, p)


def group_stats(group1: np.ndarray, group2: np.ndarray) -> GroupStats:
    """Means and sample SDs of two group matrices (empty groups give 0s)."""
    g1 = np.atleast_2d(np.asarray(group1, dtype=float))
    g2 = np.atleast_2d(np.asarray(group2, dtype=float))
    if g1.ndim != 2 or g2.ndim != 2 or (g1.size and g2.size and g1.shape[1] != g2.shape[1]):
        raise DimensionMismatchError("group matrices must be 2-D with matching columns")
    p = g1.shape[1] if g1.size else g2.shape[1]

    def _mean(g):
        return g.mean(axis=0) if g.shape[0] else np.zeros(p)

    return GroupStats(
        count=np.array([g1.shape[0], g2.shape[0]]),
        mean=np.stack([_mean(g1), _mean(g2)]),
        sd=np.stack([sample_sd(g1) if g1.shape[0] else np.zeros(p), sample_sd(g2) if g2.shape[0] else np.zeros(p)]),
    )


# ---------------------------------------------------------------------------
# Method configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodConfig:
    """Allocation method plus its tuning parameters.

    Defaults: biased coin at ``p0=0.8``, three discretization categories,
    ``rho=6`` and per-step uncertainty drawn uniformly on [0.5, 4], initial
    cohort of 8 filled in balanced blocks of 4.
    """

    method: Method
    target_n: int
    n0: int = 8
    block_size: int | None = None
    p0: float = 0.8
    categories: int = 3
    rho: float = 6.0
    gamma_range: tuple[float, float] = (0.5, 4.0)

    def __post_init__(self):
        if isinstance(self.method, str) and not isinstance(self.method, Method):
            object.__setattr__(self, "method", Method.parse(self.method))
        if self.block_size is None:
            object.__setattr__(self, "block_size", self.n0 // 2)
        object.__setattr__(self, "gamma_range", (float(self.gamma_range[0]), float(self.gamma_range[1])))
        problems: dict[str, str] = {}
        if self.target_n < 1:
            problems["target_n"] = f"must be >= 1, got {self.target_n}"
        if self.n0 > self.target_n:
            problems["n0"] = f"initial cohort {self.n0} cannot exceed target_n {self.target_n}"
        if self.block_size < 2 or self.block_size % 2 != 0:
            problems["block_size"] = f"must be even and >= 2, got {self.block_size}"
        elif self.n0 % self.block_size != 0:
            problems["n0"] = f"{self.n0} is not divisible by block size {self.block_size}"
        if not 0.5 <= self.p0 <= 1.0:
            problems["p0"] = f"must lie in [0.5, 1], got {self.p0}"
        if self.categories < 2:
            problems["categories"] = f"must be >= 2, got {self.categories}"
        if self.rho < 0:
            problems["rho"] = f"must be >= 0, got {self.rho}"
        lo, hi = self.gamma_range
        if not (0 < lo <= hi < np.inf):
            problems["gamma_range"] = f"must satisfy 0 < low <= high, got {self.gamma_range}"
        if self.method is Method.BKW and self.target_n % 2 != 0:
            problems["target_n"] = f"must be even for the robust method, got {self.target_n}"
        if problems:
            raise InvalidConfigError(problems)


# ---------------------------------------------------------------------------
# Covariate preprocessing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    """Affine map to the z-scale fitted on a reference set of subjects."""

    mean: np.ndarray
    sd: np.ndarray

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.mean) / self.sd


def standardize(matrix: CovariateMatrix) -> tuple[CovariateMatrix, Standardizer]:
    """Center and scale every column to mean 0 and sample SD 1.

    Raises :class:`ConstantColumnError` for any column with a single
    distinct value. The returned transform maps new subjects onto the same
    scale.
    """
    values = matrix.values
    for j in range(matrix.n_cols):
        if np.unique(values[:, j]).size < 2:
            raise ConstantColumnError(j, matrix.names[j])
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    transform = Standardizer(mean=_frozen_array(mean), sd=_frozen_array(sd))
    scaled = CovariateMatrix(values=transform.apply(values), names=matrix.names, ids=matrix.ids)
    return scaled, transform


def standardize_with_fallback(values: np.ndarray) -> tuple[np.ndarray, Standardizer]:
    """Live-enrollment z-scaling: constant columns map to 0 instead of failing.

    Used when re-standardizing against the subjects enrolled so far, where a
    covariate can legitimately have no variance yet.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    mean = values.mean(axis=0)
    if values.shape[0] > 1:
        sd = values.std(axis=0, ddof=1)
    else:
        sd = np.zeros(values.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    transform = Standardizer(mean=_frozen_array(mean), sd=_frozen_array(sd))
    return transform.apply(values), transform


def discretize_quantiles(values: Sequence[float], categories: int) -> tuple[np.ndarray, np.ndarray]:
    """Split values into ``categories`` ordinal levels at empirical quantiles.

    Boundaries sit at the 1/c, ..., (c-1)/c quantiles (linear interpolation
    of order statistics); a value lands in category ``1 + #{boundaries it
    strictly exceeds}``, so boundary ties stay in the lower category.

    Returns (categories array, boundary array).
    """
    if categories < 2:
        raise CategoryCountError(f"need at least 2 categories, got {categories}")
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatchError("values must be a nonempty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatchError("values must be finite")
    probs = np.arange(1, categories) / categories
    boundaries = np.quantile(arr, probs)
    return assign_categories(arr, boundaries), boundaries


def assign_categories(values: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    """Map values onto the 1-based categories induced by sorted boundaries."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    return (1 + (arr[:, None] > np.asarray(boundaries)[None, :]).sum(axis=1)).astype(np.int64)


# ---------------------------------------------------------------------------
# Initialization and decision rule
# ---------------------------------------------------------------------------


def permuted_block_init(n0: int, block_size: int, rng: RngStream | np.random.Generator) -> np.ndarray:
    """Draw the initial-cohort group sequence in balanced permuted blocks.

    Every consecutive block of ``block_size`` subjects contains exactly half
    of each group, with all balanced orderings equiprobable.
    """
    if block_size < 2 or block_size % 2 != 0:
        raise BlockConfigError(f"block size must be even and >= 2, got {block_size}")
    if n0 < 0 or n0 % block_size != 0:
        raise BlockConfigError(f"initial cohort {n0} is not divisible by block size {block_size}")
    gen = as_generator(rng)
    half = block_size // 2
    template = np.array([GROUP_ONE] * half + [GROUP_TWO] * half, dtype=np.int64)
    blocks = [gen.permutation(template) for _ in range(n0 // block_size)]
    if not blocks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(blocks)


class CoinDecision(NamedTuple):
    p_group1: float
    group: int
    draw: float


def coin_probability(discrepancy: float, p0: float) -> float:
    """Group-one probability under the biased-coin rule: ``p0`` when the
    discrepancy favors group one, ``1 - p0`` when it favors group two, and
    1/2 on a tie."""
    if not 0.5 <= p0 <= 1.0:
        raise InvalidConfigError({"p0": f"must lie in [0.5, 1], got {p0}"})
    if discrepancy < 0:
        return p0
    if discrepancy > 0:
        return 1.0 - p0
    return 0.5


def biased_coin_decide(
    discrepancy: float, p0: float, rng: RngStream | np.random.Generator
) -> CoinDecision:
    """Efron-style biased coin on the sign of the discrepancy.

    The uniform draw is returned for audit logs; a draw below the group-one
    probability assigns group one.
    """
    p_group1 = coin_probability(discrepancy, p0)
    draw = float(as_generator(rng).uniform())
    group = GROUP_ONE if draw < p_group1 else GROUP_TWO
    return CoinDecision(p_group1=p_group1, group=group, draw=draw)


# ---------------------------------------------------------------------------
# Linear algebra helpers
# ---------------------------------------------------------------------------


def symmetric_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues in [-1e-10, 0) are clamped to zero; anything below -1e-6
    raises :class:`NotPositiveSemidefiniteError`.
    """
    s = np.asarray(matrix, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatchError("matrix must be square")
    if s.size and np.max(np.abs(s - s.T)) > 1e-10:
        raise DimensionMismatchError("matrix must be symmetric within 1e-10")
    eigvals, eigvecs = np.linalg.eigh(s)
    if eigvals.size and eigvals.min() < -1e-6:
        raise NotPositiveSemidefiniteError(f"eigenvalue {eigvals.min():g} below tolerance")
    eigvals = np.clip(eigvals, 0.0, None)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return (root + root.T) / 2.0


def empirical_moments(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and empirical covariance (1/t divisor) of t subject rows."""
    arr = np.atleast_2d(np.asarray(vectors, dtype=float))
    t = arr.shape[0]
    if t < 1:
        raise DimensionMismatchError("need at least one subject vector")
    mean = arr.mean(axis=0)
    centered = arr - mean
    cov = centered.T @ centered / t
    return mean, (cov + cov.T) / 2.0
