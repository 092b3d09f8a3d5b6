"""MOS variants, rank correlation, RMSE, and first-order score mapping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RatingDataset, ReferenceMos
from .errors import ConfigError, DataError, DegenerateDataError

SCORE_VALUES = np.arange(1.0, 6.0)

MOS_METHODS = ("user_balanced", "plain")


@dataclass(frozen=True)
class MosVector:
    """Per-condition MOS values in stable condition order."""

    conditions: tuple[str, ...]
    values: np.ndarray
    vote_counts: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        counts = np.asarray(self.vote_counts, dtype=np.int64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "vote_counts", counts)
        if not (len(self.conditions) == values.size == counts.size):
            raise DataError("conditions, values, and vote_counts must align")
        if values.size and (values.min() < 1.0 or values.max() > 5.0):
            raise DataError("MOS values must lie in [1, 5]")
        if counts.size and counts.min() < 1:
            raise DataError("vote counts must be positive")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.conditions, self.values.tolist()))


@dataclass(frozen=True)
class LinearMap:
    """First-order map ``y = slope * x + intercept`` with output clipped
    to the MOS scale when applied."""

    slope: float
    intercept: float

    def apply(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return np.clip(self.slope * values + self.intercept, 1.0, 5.0)


@dataclass(frozen=True)
class ComparisonResult:
    srcc: float
    rmse: float
    rmse_after_mapping: float | None
    mapping: LinearMap | None
    n_shared: int


def mos_plain(votes) -> float:
    """Arithmetic mean of a vote multiset."""
    arr = np.asarray(votes, dtype=float)
    if arr.size == 0:
        raise DataError("cannot average an empty vote multiset")
    return float(arr.mean())


def mos_user_balanced(ds: RatingDataset, condition_id: str) -> float:
    """Mean over contributing users of each user's own mean score.

    Weighs every contributing user equally regardless of how many votes
    they cast, unlike the plain mean over all votes.
    """
    cache = ds.condition_votes(ds.condition_index(condition_id))
    per_user = (cache.counts @ SCORE_VALUES) / cache.row_totals
    return float(per_user.mean())


def dataset_mos(ds: RatingDataset, method: str = "user_balanced") -> MosVector:
    """Per-condition MOS vector for the whole dataset."""
    if method not in MOS_METHODS:
        raise ConfigError(f"method must be one of {MOS_METHODS}, got {method!r}")
    k = len(ds.conditions)
    values = np.empty(k)
    counts = np.empty(k, dtype=np.int64)
    for j in range(k):
        cache = ds.condition_votes(j)
        counts[j] = cache.n_votes
        if method == "plain":
            values[j] = cache.score_sum / cache.n_votes
        else:
            per_user = (cache.counts @ SCORE_VALUES) / cache.row_totals
            values[j] = per_user.mean()
    return MosVector(conditions=ds.conditions, values=values, vote_counts=counts)


def average_ranks(values) -> np.ndarray:
    """Fractional ranks (1-based), ties receiving their group average."""
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="stable")
    s = a[order]
    boundaries = np.flatnonzero(np.r_[True, s[1:] != s[:-1], True])
    group_sizes = np.diff(boundaries)
    group_ranks = (boundaries[:-1] + boundaries[1:] + 1) / 2.0
    ranks = np.empty(a.size)
    ranks[order] = np.repeat(group_ranks, group_sizes)
    return ranks


def _as_pair(a, b, min_len: int):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1:
        raise DataError("inputs must be one-dimensional")
    if a.size != b.size:
        raise DataError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise DataError(f"need at least {min_len} points, got {a.size}")
    return a, b


def srcc(a, b) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    a, b = _as_pair(a, b, min_len=3)
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateDataError("rank correlation undefined for a constant vector")
    ra = average_ranks(a)
    rb = average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra @ ra) * (rb @ rb))
    return float(np.clip((ra @ rb) / denom, -1.0, 1.0))


def rmse(a, b) -> float:
    """Root mean squared difference of two equally long vectors."""
    a, b = _as_pair(a, b, min_len=1)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def fit_line(x, y) -> LinearMap:
    """Least-squares line mapping ``x`` onto ``y``."""
    x, y = _as_pair(x, y, min_len=2)
    if np.ptp(x) == 0.0:
        raise DegenerateDataError("cannot fit a line to constant x values")
    dx = x - x.mean()
    dy = y - y.mean()
    slope = float((dx @ dy) / (dx @ dx))
    intercept = float(y.mean() - slope * x.mean())
    return LinearMap(slope=slope, intercept=intercept)


def _shared_vectors(cs: MosVector, ref: ReferenceMos):
    shared = [c for c in cs.conditions if c in ref]
    if len(shared) < 3:
        raise DataError(
            f"need at least 3 shared conditions, got {len(shared)}"
        )
    pos = {c: i for i, c in enumerate(cs.conditions)}
    x = cs.values[[pos[c] for c in shared]]
    y = np.array([ref[c] for c in shared])
    return x, y, shared


def fit_first_order_map(cs: MosVector, ref: ReferenceMos) -> LinearMap:
    """Least-squares line mapping crowdsourcing MOS onto the reference
    scale over their shared conditions."""
    x, y, _ = _shared_vectors(cs, ref)
    return fit_line(x, y)


def compare_to_reference(
    cs: MosVector, ref: ReferenceMos, with_mapping: bool = False
) -> ComparisonResult:
    """SRCC and RMSE between a MOS vector and a reference table.

    With ``with_mapping``, also reports the RMSE after a first-order map
    of the MOS values onto the reference scale.  SRCC is unchanged by
    any increasing linear map, so only one value is reported.
    """
    x, y, shared = _shared_vectors(cs, ref)
    result_srcc = srcc(x, y)
    result_rmse = rmse(x, y)
    mapping = None
    mapped_rmse = None
    if with_mapping:
        mapping = fit_line(x, y)
        mapped_rmse = rmse(mapping.apply(x), y)
    return ComparisonResult(
        srcc=result_srcc,
        rmse=result_rmse,
        rmse_after_mapping=mapped_rmse,
        mapping=mapping,
        n_shared=len(shared),
    )
