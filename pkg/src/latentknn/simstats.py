"""
Similarity Statistics - Overlaps, row-difference means and variances, candidate rows

For rows u and v the overlap O^{uv} is the set of columns observed in both.
The similarity between u and v is the sample variance of Z(u, j) - Z(v, j)
over the overlap; small variance means the rows differ by a near constant.

Column exclusions restrict the overlap further (the tensor path drops the
columns that share a coordinate with the target column). An exclusion may
be None, a boolean array over the columns, a callable j -> bool, or any
object with an ``as_mask(n)`` method.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from latentknn.errors import ConfigError, InsufficientOverlapError
from latentknn.obsdata import ObservationMatrix

logger = logging.getLogger(__name__)

ColumnExclusion = Union[None, np.ndarray, Callable[[int], bool]]


def exclusion_mask(excluded: ColumnExclusion, n: int) -> np.ndarray:
    """Boolean array of length n, True where a column is excluded"""
    if excluded is None:
        return np.zeros(n, dtype=bool)
    if hasattr(excluded, "as_mask"):
        return excluded.as_mask(n)
    if isinstance(excluded, np.ndarray):
        if excluded.shape != (n,):
            raise ConfigError(f"exclusion mask has shape {excluded.shape}, expected ({n},)")
        return excluded.astype(bool, copy=False)
    return np.fromiter((bool(excluded(j)) for j in range(n)), dtype=bool, count=n)


@dataclass(frozen=True)
class PairStats:
    """Overlap size, mean difference m_uv and sample variance s_uv^2 of one row pair"""

    overlap_size: int
    mean_diff: Optional[float]
    sample_var: Optional[float]


@dataclass(frozen=True)
class CandidateSet:
    """Rows eligible to vote for cell (anchor_row, target_col), ascending by index"""

    anchor_row: int
    target_col: int
    beta: int
    beta_high: Optional[int]
    rows: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


@dataclass(frozen=True, eq=False)
class AnchorStats:
    """
    Statistics of one anchor row against every row of the matrix.

    overlap[v] is |O^{uv}|; mean_diff[v] is NaN when the overlap is empty and
    sample_var[v] is NaN when the overlap has fewer than two columns.
    """

    anchor_row: int
    overlap: np.ndarray
    mean_diff: np.ndarray
    sample_var: np.ndarray


def _check_beta(beta_low: int, beta_high: Optional[int]):
    if beta_low < 2:
        raise ConfigError(f"beta must be at least 2, got {beta_low}")
    if beta_high is not None and beta_high < beta_low:
        raise ConfigError(f"beta_high ({beta_high}) is below beta ({beta_low})")


def row_overlap(obs: ObservationMatrix, u: int, v: int, excluded: ColumnExclusion = None) -> np.ndarray:
    """Columns observed in both rows u and v and not excluded, ascending"""
    obs.check_row(u)
    obs.check_row(v)
    both = obs.mask[u] & obs.mask[v] & ~exclusion_mask(excluded, obs.n)
    return np.flatnonzero(both)


def _differences(obs: ObservationMatrix, u: int, v: int, excluded: ColumnExclusion) -> np.ndarray:
    overlap = row_overlap(obs, u, v, excluded)
    return obs.filled[u, overlap] - obs.filled[v, overlap]


def pair_stats(
    obs: ObservationMatrix,
    u: int,
    v: int,
    excluded: ColumnExclusion = None,
    require_variance: bool = True,
) -> PairStats:
    """
    Mean and sample variance of Z(u, .) - Z(v, .) over the overlap.

    The variance uses the |O| - 1 denominator. With require_variance set an
    overlap below two columns raises InsufficientOverlapError; otherwise the
    undefined fields come back as None.
    """
    d = _differences(obs, u, v, excluded)
    size = len(d)
    if size < 2 and require_variance:
        raise InsufficientOverlapError(f"rows {u} and {v} overlap on {size} column(s), need 2")
    if size == 0:
        return PairStats(0, None, None)

    mean = float(d.sum() / size)
    if size == 1:
        return PairStats(1, mean, None)
    var = float(((d - mean) ** 2).sum() / (size - 1))
    return PairStats(size, mean, var)


def variance_u_statistic(obs: ObservationMatrix, u: int, v: int, excluded: ColumnExclusion = None) -> float:
    """Sample variance written as the average squared gap over all column pairs"""
    d = _differences(obs, u, v, excluded)
    size = len(d)
    if size < 2:
        raise InsufficientOverlapError(f"rows {u} and {v} overlap on {size} column(s), need 2")
    gaps = np.subtract.outer(d, d)
    return float((gaps ** 2).sum() / (2 * size * (size - 1)))


def anchor_stats(obs: ObservationMatrix, u: int, excluded: ColumnExclusion = None) -> AnchorStats:
    """Overlap, mean difference and sample variance of row u against all rows"""
    obs.check_row(u)
    allowed = obs.mask & ~exclusion_mask(excluded, obs.n)
    both = allowed & allowed[u]
    overlap = both.sum(axis=1)

    d = np.where(both, obs.filled[u] - obs.filled, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = d.sum(axis=1) / overlap
        centred = np.where(both, d - mean[:, None], 0.0)
        var = (centred ** 2).sum(axis=1) / (overlap - 1)
    mean[overlap == 0] = np.nan
    var[overlap < 2] = np.nan
    return AnchorStats(u, overlap, mean, var)


def eligible_rows(
    stats: AnchorStats,
    beta_low: int,
    beta_high: Optional[int] = None,
    include_self: bool = False,
) -> np.ndarray:
    """Boolean array of rows whose overlap with the anchor lies in the window"""
    _check_beta(beta_low, beta_high)
    eligible = stats.overlap >= beta_low
    if beta_high is not None:
        eligible &= stats.overlap <= beta_high
    eligible[stats.anchor_row] = include_self
    return eligible


def candidate_rows(
    obs: ObservationMatrix,
    u: int,
    i: int,
    beta_low: int = 2,
    beta_high: Optional[int] = None,
    excluded: ColumnExclusion = None,
    include_self: bool = False,
) -> CandidateSet:
    """
    Rows v that observe column i and overlap row u on between beta_low and
    beta_high columns (both inclusive, beta_high None meaning unbounded).

    The anchor itself joins only when include_self is set and (u, i) is
    observed; it is not subject to the overlap window.
    """
    obs.check_col(i)
    stats = anchor_stats(obs, u, excluded)
    eligible = eligible_rows(stats, beta_low, beta_high, include_self) & obs.mask[:, i]
    return CandidateSet(u, i, beta_low, beta_high, tuple(np.flatnonzero(eligible).tolist()))


class PairStatsTable:
    """
    Statistics of every row pair, computed up front.

    Row u of each table holds that anchor's AnchorStats arrays. Build it for
    columns by passing the transposed matrix.
    """

    def __init__(self, overlap: np.ndarray, mean_diff: np.ndarray, sample_var: np.ndarray):
        self.overlap = overlap
        self.mean_diff = mean_diff
        self.sample_var = sample_var

    @classmethod
    def from_observations(cls, obs: ObservationMatrix) -> "PairStatsTable":
        m = obs.m
        overlap = np.zeros((m, m), dtype=np.int64)
        mean_diff = np.full((m, m), np.nan)
        sample_var = np.full((m, m), np.nan)
        for u in range(m):
            stats = anchor_stats(obs, u)
            overlap[u] = stats.overlap
            mean_diff[u] = stats.mean_diff
            sample_var[u] = stats.sample_var
        logger.debug(f"Precomputed pair statistics for {m} rows")
        return cls(overlap, mean_diff, sample_var)

    def __len__(self) -> int:
        return len(self.overlap)

    def anchor(self, u: int) -> AnchorStats:
        return AnchorStats(u, self.overlap[u], self.mean_diff[u], self.sample_var[u])

    def get(self, u: int, v: int) -> PairStats:
        size = int(self.overlap[u, v])
        mean = float(self.mean_diff[u, v]) if size >= 1 else None
        var = float(self.sample_var[u, v]) if size >= 2 else None
        return PairStats(size, mean, var)
