"""
Estimator - k-nearest-neighbor and kernel-weighted entry estimates

Every estimate is built from the basic three-point estimate

    A_vj(u, i) = Z(u, j) + Z(v, i) - Z(v, j)

The user-user estimator averages Z(v, i) + m_uv over the k candidate rows v
with the smallest sample variance s_uv^2 (ties broken by ascending row
index). The item-item estimator is the same computation on the transpose.
The Gaussian user-item estimator weights every basic estimate in B^beta(u, i)
by exp(-lambda * min(s_uv^2, s_ij^2)).
"""

import logging
from dataclasses import asdict, dataclass, replace
from enum import Enum, IntEnum
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from latentknn.errors import ConfigError, MissingEntryError
from latentknn.obsdata import ObservationMatrix
from latentknn.parallel import ProgressFn, map_rows
from latentknn.simstats import (
    AnchorStats,
    ColumnExclusion,
    PairStatsTable,
    anchor_stats,
    eligible_rows,
)

logger = logging.getLogger(__name__)


class Variant(str, Enum):
    USER_USER = "user-user"
    ITEM_ITEM = "item-item"
    GAUSSIAN = "user-item-gaussian"


class Fallback(str, Enum):
    ZERO = "zero"
    GLOBAL_MEAN = "global-mean"


class Target(str, Enum):
    MISSING_ONLY = "missing-only"
    ALL_ENTRIES = "all-entries"


class Provenance(IntEnum):
    ESTIMATED = 0
    FALLBACK = 1
    OBSERVED = 2

    @property
    def label(self) -> str:
        return _PROVENANCE_LABELS[self]


_PROVENANCE_LABELS = {
    Provenance.ESTIMATED: "estimated",
    Provenance.FALLBACK: "fallback",
    Provenance.OBSERVED: "observed-passthrough",
}


def _coerce(enum_type, value, field: str):
    try:
        return enum_type(value)
    except ValueError:
        choices = ", ".join(member.value for member in enum_type)
        raise ConfigError(f"invalid {field} {value!r} (choose from {choices})")


@dataclass(frozen=True)
class EstimatorConfig:
    """Hyperparameters of one estimator run; beta_high None means no upper window"""

    variant: Variant = Variant.USER_USER
    k: int = 5
    beta_low: int = 2
    beta_high: Optional[int] = None
    lam: float = 1.0
    include_self: bool = False
    fallback: Fallback = Fallback.ZERO

    def __post_init__(self):
        object.__setattr__(self, "variant", _coerce(Variant, self.variant, "variant"))
        object.__setattr__(self, "fallback", _coerce(Fallback, self.fallback, "fallback"))
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k}")
        if int(self.beta_low) != self.beta_low or self.beta_low < 2:
            raise ConfigError(f"beta must be an integer >= 2, got {self.beta_low}")
        if self.beta_high is not None and self.beta_high < self.beta_low:
            raise ConfigError(f"beta_high ({self.beta_high}) is below beta ({self.beta_low})")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigError(f"lambda must be a finite non-negative number, got {self.lam}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "beta_low", int(self.beta_low))
        if self.beta_high is not None:
            object.__setattr__(self, "beta_high", int(self.beta_high))
        object.__setattr__(self, "lam", float(self.lam))

    def to_dict(self) -> Dict:
        values = asdict(self)
        values["variant"] = self.variant.value
        values["fallback"] = self.fallback.value
        return values


@dataclass(frozen=True, eq=False)
class EstimateMatrix:
    """Dense estimates with a provenance code (Provenance) for every cell"""

    values: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.provenance.shape:
            raise ConfigError("values and provenance must share a shape")
        self.values.setflags(write=False)
        self.provenance.setflags(write=False)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def estimated_mask(self) -> np.ndarray:
        return self.provenance == Provenance.ESTIMATED

    def provenance_at(self, u: int, i: int) -> Provenance:
        return Provenance(int(self.provenance[u, i]))

    def counts(self) -> Dict[str, int]:
        return {p.label: int((self.provenance == p).sum()) for p in Provenance}

    def transpose(self) -> "EstimateMatrix":
        return EstimateMatrix(self.values.T.copy(), self.provenance.T.copy())


@dataclass(frozen=True)
class KnnEstimate:
    value: float
    neighbors: Tuple[int, ...]
    provenance: Provenance


@dataclass(frozen=True)
class WeightedEstimate:
    value: float
    total_weight: float
    provenance: Provenance


def fallback_value(obs: ObservationMatrix, cfg: EstimatorConfig) -> float:
    if cfg.fallback is Fallback.GLOBAL_MEAN:
        return obs.global_mean()
    return 0.0


def basic_estimate(obs: ObservationMatrix, v: int, j: int, u: int, i: int) -> float:
    """Three-point estimate Z(u, j) + Z(v, i) - Z(v, j) of A(u, i)"""
    for name, (a, b) in (("Z(v,j)", (v, j)), ("Z(u,j)", (u, j)), ("Z(v,i)", (v, i))):
        if not obs.is_observed(a, b):
            raise MissingEntryError(f"{name} at ({a},{b}) is not observed")
    return float(obs.filled[u, j] + obs.filled[v, i] - obs.filled[v, j])


def gaussian_weight(row_var, col_var, lam: float):
    """exp(-lambda * min(row_var, col_var)); accepts scalars or broadcastable arrays"""
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    weight = np.exp(-lam * np.minimum(row_var, col_var))
    return float(weight) if np.ndim(weight) == 0 else weight


# ---------------------------------------------------------------------------
# User-user k-NN
# ---------------------------------------------------------------------------

def _ranked_rows(stats: AnchorStats, cfg: EstimatorConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Eligible rows by ascending (sample_var, row) and the mean differences to use"""
    eligible = eligible_rows(stats, cfg.beta_low, cfg.beta_high, cfg.include_self)
    var = stats.sample_var.copy()
    mean = stats.mean_diff.copy()
    if cfg.include_self:
        var[stats.anchor_row] = 0.0
        mean[stats.anchor_row] = 0.0
    idx = np.flatnonzero(eligible)
    return idx[np.lexsort((idx, var[idx]))], mean


def _knn_block(
    obs: ObservationMatrix, stats: AnchorStats, targets: np.ndarray, cfg: EstimatorConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Sums and counts of Z(v, i) + m_uv over the selected rows of every target.

    Returns (totals, counts, ranked rows, chosen) where chosen[r, t] marks
    that ranked row r votes for targets[t]. Sums accumulate in rank order.
    """
    order, mean = _ranked_rows(stats, cfg)
    if not len(order):
        empty = np.zeros((0, len(targets)), dtype=bool)
        return np.zeros(len(targets)), np.zeros(len(targets), dtype=np.int64), order, empty

    observed = obs.mask[np.ix_(order, targets)]
    chosen = observed & (np.cumsum(observed, axis=0) <= cfg.k)
    terms = np.where(chosen, obs.filled[np.ix_(order, targets)] + mean[order][:, None], 0.0)
    totals = np.cumsum(terms, axis=0)[-1]
    return totals, chosen.sum(axis=0), order, chosen


def estimate_row(
    obs: ObservationMatrix,
    u: int,
    targets: Sequence[int],
    cfg: EstimatorConfig,
    stats: Optional[AnchorStats] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """User-user estimates for several columns of one anchor row"""
    targets = np.asarray(targets, dtype=np.int64)
    if stats is None:
        stats = anchor_stats(obs, u)
    totals, counts, _, _ = _knn_block(obs, stats, targets, cfg)

    values = np.full(len(targets), fallback_value(obs, cfg))
    found = counts > 0
    values[found] = totals[found] / counts[found]
    provenance = np.where(found, Provenance.ESTIMATED, Provenance.FALLBACK).astype(np.int8)
    return values, provenance


def knn_estimate(
    obs: ObservationMatrix,
    u: int,
    i: int,
    cfg: EstimatorConfig,
    excluded: ColumnExclusion = None,
) -> KnnEstimate:
    """
    k-NN estimate of A(u, i).

    For the item-item variant u and i still name the cell in obs; the
    neighbors returned are then columns.
    """
    if cfg.variant is Variant.ITEM_ITEM:
        flipped = replace(cfg, variant=Variant.USER_USER)
        return knn_estimate(obs.transpose(), i, u, flipped, excluded)
    if cfg.variant is not Variant.USER_USER:
        raise ConfigError(f"knn_estimate does not handle variant {cfg.variant.value}")

    obs.check_row(u)
    obs.check_col(i)
    stats = anchor_stats(obs, u, excluded)
    totals, counts, order, chosen = _knn_block(obs, stats, np.array([i]), cfg)
    if counts[0] == 0:
        return KnnEstimate(fallback_value(obs, cfg), (), Provenance.FALLBACK)
    neighbors = tuple(order[chosen[:, 0]].tolist())
    return KnnEstimate(float(totals[0] / counts[0]), neighbors, Provenance.ESTIMATED)


# ---------------------------------------------------------------------------
# General weighted estimator
# ---------------------------------------------------------------------------

def hard_threshold_estimate(obs: ObservationMatrix, u: int, i: int, cfg: EstimatorConfig) -> WeightedEstimate:
    """
    The weighted formula with weight 1 on every (v, j) in B(u, i) whose row v
    is one of the k selected rows and weight 0 elsewhere.

    Coincides with knn_estimate whenever the selected rows overlap the anchor
    on the same number of columns.
    """
    if cfg.variant is Variant.ITEM_ITEM:
        flipped = replace(cfg, variant=Variant.USER_USER)
        return hard_threshold_estimate(obs.transpose(), i, u, flipped)

    selected = knn_estimate(obs, u, i, replace(cfg, variant=Variant.USER_USER)).neighbors
    total, weight = 0.0, 0
    for v in selected:
        for j in np.flatnonzero(obs.mask[u] & obs.mask[v]).tolist():
            total += obs.filled[u, j] + obs.filled[v, i] - obs.filled[v, j]
            weight += 1
    if weight == 0:
        return WeightedEstimate(fallback_value(obs, cfg), 0.0, Provenance.FALLBACK)
    return WeightedEstimate(total / weight, float(weight), Provenance.ESTIMATED)


def _self_zeroed(stats: AnchorStats, include_self: bool) -> np.ndarray:
    var = stats.sample_var.copy()
    if include_self:
        var[stats.anchor_row] = 0.0
    return var


def _gaussian_cell(
    obs: ObservationMatrix,
    u: int,
    i: int,
    cfg: EstimatorConfig,
    row_stats: AnchorStats,
    col_stats: AnchorStats,
) -> WeightedEstimate:
    rows = np.flatnonzero(
        eligible_rows(row_stats, cfg.beta_low, cfg.beta_high, cfg.include_self) & obs.mask[:, i]
    )
    cols = np.flatnonzero(
        eligible_rows(col_stats, cfg.beta_low, cfg.beta_high, cfg.include_self) & obs.mask[u, :]
    )
    inside = obs.mask[np.ix_(rows, cols)]
    if not inside.any():
        return WeightedEstimate(fallback_value(obs, cfg), 0.0, Provenance.FALLBACK)

    basic = obs.filled[u, cols][None, :] + obs.filled[rows, i][:, None] - obs.filled[np.ix_(rows, cols)]
    row_var = _self_zeroed(row_stats, cfg.include_self)[rows]
    col_var = _self_zeroed(col_stats, cfg.include_self)[cols]
    weights = np.where(inside, gaussian_weight(row_var[:, None], col_var[None, :], cfg.lam), 0.0)

    total_weight = float(weights.sum())
    if total_weight == 0.0:
        # every weight underflowed
        return WeightedEstimate(fallback_value(obs, cfg), 0.0, Provenance.FALLBACK)
    value = float(np.where(inside, weights * basic, 0.0).sum() / total_weight)
    return WeightedEstimate(value, total_weight, Provenance.ESTIMATED)


def weighted_estimate(
    obs: ObservationMatrix,
    u: int,
    i: int,
    cfg: EstimatorConfig,
    column_table: Optional[PairStatsTable] = None,
) -> WeightedEstimate:
    """
    Gaussian user-item kernel estimate over B^beta(u, i): every (v, j) with
    (v, j), (u, j) and (v, i) observed, |O^{uv}| >= beta and |O^{ij}| >= beta.
    """
    if cfg.variant is not Variant.GAUSSIAN:
        raise ConfigError(f"weighted_estimate needs variant {Variant.GAUSSIAN.value}, got {cfg.variant.value}")
    obs.check_row(u)
    obs.check_col(i)
    col_stats = column_table.anchor(i) if column_table is not None else anchor_stats(obs.transpose(), i)
    return _gaussian_cell(obs, u, i, cfg, anchor_stats(obs, u), col_stats)


# ---------------------------------------------------------------------------
# Whole-matrix completion
# ---------------------------------------------------------------------------

RowFn = Callable[[int, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def target_columns(obs: ObservationMatrix, u: int, target: Target) -> np.ndarray:
    if target is Target.ALL_ENTRIES:
        return np.arange(obs.n)
    return np.flatnonzero(~obs.mask[u])


def complete_rows(
    obs: ObservationMatrix,
    target: Union[Target, str],
    row_fn: RowFn,
    workers: int = 1,
    progress: Optional[ProgressFn] = None,
    should_stop: Optional[Callable[[], bool]] = None,
) -> EstimateMatrix:
    """Run row_fn(u, targets) for every row and assemble an EstimateMatrix"""
    target = _coerce(Target, target, "target")

    def run(u: int):
        targets = target_columns(obs, u, target)
        if not len(targets):
            return targets, np.empty(0), np.empty(0, dtype=np.int8)
        values, provenance = row_fn(u, targets)
        return targets, values, provenance

    results = map_rows(run, range(obs.m), workers, progress, should_stop)

    values = np.where(obs.mask, obs.filled, 0.0)
    provenance = np.where(obs.mask, Provenance.OBSERVED, Provenance.FALLBACK).astype(np.int8)
    for u, (targets, row_values, row_provenance) in enumerate(results):
        values[u, targets] = row_values
        provenance[u, targets] = row_provenance
    return EstimateMatrix(values, provenance)


def complete_matrix(
    obs: ObservationMatrix,
    cfg: EstimatorConfig,
    target: Union[Target, str] = Target.MISSING_ONLY,
    workers: int = 1,
    progress: Optional[ProgressFn] = None,
    should_stop: Optional[Callable[[], bool]] = None,
) -> EstimateMatrix:
    """
    Estimate every target cell with the configured variant.

    missing-only copies observed cells through unchanged; all-entries also
    re-estimates (de-noises) the observed ones. The result does not depend
    on the worker count.

    The gaussian variant first builds the column pair table: O(n^2 m) time
    and O(n^2) memory, shared by all rows. For inputs with tens of
    thousands of columns prefer user-user or item-item.
    """
    target = _coerce(Target, target, "target")
    logger.info(
        f"Completing {obs.m}x{obs.n} matrix ({len(obs)} observed) "
        f"with {cfg.variant.value}, k={cfg.k}, beta={cfg.beta_low}"
    )

    if cfg.variant is Variant.ITEM_ITEM:
        flipped = replace(cfg, variant=Variant.USER_USER)
        return complete_matrix(obs.transpose(), flipped, target, workers, progress, should_stop).transpose()

    if cfg.variant is Variant.GAUSSIAN:
        column_table = PairStatsTable.from_observations(obs.transpose())

        def row_fn(u: int, targets: np.ndarray):
            row_stats = anchor_stats(obs, u)
            cells = [_gaussian_cell(obs, u, int(i), cfg, row_stats, column_table.anchor(int(i))) for i in targets]
            values = np.array([cell.value for cell in cells])
            provenance = np.array([cell.provenance for cell in cells], dtype=np.int8)
            return values, provenance
    else:
        def row_fn(u: int, targets: np.ndarray):
            return estimate_row(obs, u, targets, cfg)

    return complete_rows(obs, target, row_fn, workers, progress, should_stop)
