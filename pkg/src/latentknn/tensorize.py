"""
Tensorize - Flatten tensors into matrices and complete them

A FlatteningPlan splits the tensor dimensions into row dimensions I1 and
column dimensions I2 (ordered by the permutation pi). Within each side the
flattened index is row-major: the last listed dimension varies fastest, so
a coordinate tuple (a_1, ..., a_s) over sizes (n_1, ..., n_s) maps to

    sum_tau a_tau * prod_{s > tau} n_s      (0-based)

Files and reports show these indices 1-based.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from latentknn.errors import ConfigError, DimensionError, IndexOutOfRangeError, ShapeMismatchError
from latentknn.estimator import (
    EstimateMatrix,
    EstimatorConfig,
    Target,
    Variant,
    complete_matrix,
    complete_rows,
    estimate_row,
)
from latentknn.obsdata import ObservationMatrix, ObservationTensor
from latentknn.parallel import ProgressFn
from latentknn.simstats import anchor_stats

logger = logging.getLogger(__name__)

MAX_PARTITION_ORDER = 20


@dataclass(frozen=True)
class FlatteningPlan:
    """Tensor shape, dimension permutation pi (0-based) and split point t1"""

    shape: Tuple[int, ...]
    pi: Tuple[int, ...]
    t1: int

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        pi = tuple(int(q) for q in self.pi)
        if len(shape) < 2:
            raise DimensionError(f"a tensor needs order >= 2, got {len(shape)}")
        if any(s < 1 for s in shape):
            raise DimensionError(f"tensor dimensions must be positive, got {shape}")
        if sorted(pi) != list(range(len(shape))):
            raise ConfigError(f"{pi} is not a permutation of the {len(shape)} dimensions")
        if not 1 <= self.t1 <= len(shape) - 1:
            raise ConfigError(f"split point must lie in 1..{len(shape) - 1}, got {self.t1}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "pi", pi)

    @classmethod
    def identity(cls, shape: Sequence[int], t1: int = 1) -> "FlatteningPlan":
        return cls(tuple(shape), tuple(range(len(shape))), t1)

    @classmethod
    def from_partition(cls, shape: Sequence[int], row_dims: Sequence[int], col_dims: Sequence[int]) -> "FlatteningPlan":
        return cls(tuple(shape), tuple(row_dims) + tuple(col_dims), len(row_dims))

    @property
    def t2(self) -> int:
        return len(self.shape) - self.t1

    @property
    def row_dims(self) -> Tuple[int, ...]:
        return self.pi[: self.t1]

    @property
    def col_dims(self) -> Tuple[int, ...]:
        return self.pi[self.t1:]

    @property
    def row_shape(self) -> Tuple[int, ...]:
        return tuple(self.shape[q] for q in self.row_dims)

    @property
    def col_shape(self) -> Tuple[int, ...]:
        return tuple(self.shape[q] for q in self.col_dims)

    @property
    def m(self) -> int:
        return math.prod(self.row_shape)

    @property
    def n(self) -> int:
        return math.prod(self.col_shape)

    @property
    def n_prime(self) -> int:
        """Columns sharing no coordinate with a given column"""
        return math.prod(s - 1 for s in self.col_shape)

    def describe(self) -> str:
        left = ",".join(str(q + 1) for q in self.row_dims)
        right = ",".join(str(q + 1) for q in self.col_dims)
        return f"{left}|{right}"


def _check_coords(coords: Sequence[int], plan: FlatteningPlan):
    if len(coords) != len(plan.shape):
        raise ShapeMismatchError(f"expected {len(plan.shape)} coordinates, got {len(coords)}")
    for q, (a, size) in enumerate(zip(coords, plan.shape)):
        if not 0 <= a < size:
            raise IndexOutOfRangeError(f"coordinate {q} = {a} outside 0..{size - 1}")


def flatten_index(coords: Sequence[int], plan: FlatteningPlan) -> Tuple[int, int]:
    """Row and column (0-based) of a tensor coordinate under the plan"""
    _check_coords(coords, plan)
    u = np.ravel_multi_index(tuple(coords[q] for q in plan.row_dims), plan.row_shape)
    i = np.ravel_multi_index(tuple(coords[q] for q in plan.col_dims), plan.col_shape)
    return int(u), int(i)


def unflatten_index(u: int, i: int, plan: FlatteningPlan) -> Tuple[int, ...]:
    if not 0 <= u < plan.m:
        raise IndexOutOfRangeError(f"row {u} outside 0..{plan.m - 1}")
    if not 0 <= i < plan.n:
        raise IndexOutOfRangeError(f"column {i} outside 0..{plan.n - 1}")
    coords = [0] * len(plan.shape)
    for q, a in zip(plan.row_dims, np.unravel_index(u, plan.row_shape)):
        coords[q] = int(a)
    for q, a in zip(plan.col_dims, np.unravel_index(i, plan.col_shape)):
        coords[q] = int(a)
    return tuple(coords)


def flatten_tensor(tobs: ObservationTensor, plan: FlatteningPlan) -> ObservationMatrix:
    if tobs.shape != plan.shape:
        raise ShapeMismatchError(f"tensor shape {tobs.shape} does not match plan shape {plan.shape}")
    if not len(tobs):
        return ObservationMatrix.empty(plan.m, plan.n)
    rows = np.ravel_multi_index(tobs.coords[:, list(plan.row_dims)].T, plan.row_shape)
    cols = np.ravel_multi_index(tobs.coords[:, list(plan.col_dims)].T, plan.col_shape)
    return ObservationMatrix(plan.m, plan.n, rows, cols, tobs.values)


def unflatten_estimate(values: np.ndarray, plan: FlatteningPlan) -> np.ndarray:
    """Reshape an m x n flattened array back to the tensor's own dimension order"""
    values = np.asarray(values)
    if values.shape != (plan.m, plan.n):
        raise ShapeMismatchError(f"expected a {plan.m}x{plan.n} array, got {values.shape}")
    stacked = values.reshape(plan.row_shape + plan.col_shape)
    return np.transpose(stacked, np.argsort(plan.pi))


@lru_cache(maxsize=32)
def _column_grid(col_shape: Tuple[int, ...]) -> np.ndarray:
    grid = np.array(np.unravel_index(np.arange(math.prod(col_shape)), col_shape))
    grid.setflags(write=False)
    return grid


class SharedCoordinateColumns:
    """Columns that share at least one tensor coordinate with a given column"""

    def __init__(self, i: int, plan: FlatteningPlan):
        if not 0 <= i < plan.n:
            raise IndexOutOfRangeError(f"column {i} outside 0..{plan.n - 1}")
        self.column = i
        self.plan = plan
        self._coords = np.array(np.unravel_index(i, plan.col_shape))

    @cached_property
    def mask(self) -> np.ndarray:
        grid = _column_grid(self.plan.col_shape)
        return (grid == self._coords[:, None]).any(axis=0)

    def as_mask(self, n: int) -> np.ndarray:
        if n != self.plan.n:
            raise ShapeMismatchError(f"plan has {self.plan.n} columns, matrix has {n}")
        return self.mask

    def __call__(self, j: int) -> bool:
        return bool(self.mask[j])

    def complement(self) -> np.ndarray:
        """N_i: the columns sharing no coordinate, ascending"""
        return np.flatnonzero(~self.mask)


def excluded_columns(i: int, plan: FlatteningPlan) -> SharedCoordinateColumns:
    return SharedCoordinateColumns(i, plan)


# ---------------------------------------------------------------------------
# Partition choice
# ---------------------------------------------------------------------------

def _partition_key(rows: int, cols: int, mode: str) -> Tuple[int, int]:
    # user mode minimizes max{1/rows, cols^-1/2}, i.e. maximizes min{rows^2, cols}
    if mode == "user":
        return min(rows * rows, cols), rows
    return min(cols * cols, rows), cols


def optimal_partition(shape: Sequence[int], mode: str = "user") -> FlatteningPlan:
    """
    Exhaustive search over the 2^t - 2 bipartitions of the dimensions.

    Ties go first to the larger side that the mode favors (rows in user
    mode, columns in item mode), then to the lexicographically smallest I1.
    """
    shape = tuple(int(s) for s in shape)
    if mode not in ("user", "item"):
        raise ConfigError(f"partition mode must be 'user' or 'item', got {mode!r}")
    if len(shape) < 2:
        raise DimensionError(f"a tensor needs order >= 2, got {len(shape)}")
    if len(shape) > MAX_PARTITION_ORDER:
        raise ConfigError(f"exhaustive partition search supports order <= {MAX_PARTITION_ORDER}, got {len(shape)}")

    dims = range(len(shape))
    subsets = sorted(
        itertools.chain.from_iterable(itertools.combinations(dims, size) for size in range(1, len(shape)))
    )
    best, best_key = None, None
    for row_dims in subsets:
        rows = math.prod(shape[q] for q in row_dims)
        cols = math.prod(shape[q] for q in dims if q not in row_dims)
        key = _partition_key(rows, cols, mode)
        if best_key is None or key > best_key:
            best, best_key = row_dims, key

    col_dims = tuple(q for q in dims if q not in best)
    plan = FlatteningPlan.from_partition(shape, best, col_dims)
    logger.debug(f"Optimal {mode} partition of {shape}: {plan.describe()}")
    return plan


def parse_partition(text: str, shape: Sequence[int]) -> FlatteningPlan:
    """Parse "1,2|3": 1-based row dimensions, a bar, then column dimensions"""
    if text.count("|") != 1:
        raise ConfigError(f"partition {text!r} must contain exactly one '|'")
    try:
        left, right = (
            tuple(int(tok) - 1 for tok in side.split(",") if tok.strip())
            for side in text.split("|")
        )
    except ValueError:
        raise ConfigError(f"partition {text!r} must list integer dimensions")
    if not left or not right:
        raise ConfigError(f"partition {text!r} needs dimensions on both sides")
    return FlatteningPlan.from_partition(shape, left, right)


@dataclass(frozen=True)
class TensorParameters:
    beta_low: int
    beta_high: int
    k: int


def corollary_tensor_parameters(plan: FlatteningPlan, p: float) -> TensorParameters:
    """
    Overlap window and k that make the tensor MSE bound vanish:
    beta_l = min{n'p^2, sqrt(n')}/2, beta_h = 2 max{n'p^2, sqrt(n')},
    k = sqrt(mp)/8, rounded to valid integers.
    """
    if not 0 < p <= 1:
        raise ConfigError(f"sample probability must lie in (0, 1], got {p}")
    n_prime = plan.n_prime
    spread = n_prime * p * p
    root = math.sqrt(n_prime)
    beta_low = max(2, math.floor(0.5 * min(spread, root)))
    beta_high = max(beta_low, math.ceil(2 * max(spread, root)))
    k = max(1, math.ceil(math.sqrt(plan.m * p) / 8))
    return TensorParameters(beta_low, beta_high, k)


# ---------------------------------------------------------------------------
# Completion
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TensorEstimate:
    """Flattened estimate plus the plan needed to read it as a tensor"""

    matrix: EstimateMatrix
    plan: FlatteningPlan

    @property
    def tensor(self) -> np.ndarray:
        return unflatten_estimate(self.matrix.values, self.plan)

    @property
    def tensor_provenance(self) -> np.ndarray:
        return unflatten_estimate(self.matrix.provenance, self.plan)


def tensor_complete(
    tobs: ObservationTensor,
    plan: FlatteningPlan,
    cfg: EstimatorConfig,
    exact_exclusion: bool = False,
    target: Union[Target, str] = Target.MISSING_ONLY,
    workers: int = 1,
    progress: Optional[ProgressFn] = None,
    should_stop: Optional[Callable[[], bool]] = None,
) -> TensorEstimate:
    """
    Complete a tensor through its flattening.

    With exact_exclusion the row statistics for target column i are taken
    over the overlap restricted to columns sharing no coordinate with i,
    recomputed for every target cell. Without it the plain matrix algorithm
    runs on the flattened matrix.
    """
    flat = flatten_tensor(tobs, plan)
    logger.info(f"Tensor {tobs.shape} flattened to {plan.m}x{plan.n} via {plan.describe()}")

    if not exact_exclusion:
        matrix = complete_matrix(flat, cfg, target, workers, progress, should_stop)
        return TensorEstimate(matrix, plan)

    if cfg.variant is not Variant.USER_USER:
        raise ConfigError(f"exact exclusion supports the {Variant.USER_USER.value} variant only")

    def row_fn(u: int, targets: np.ndarray):
        values = np.empty(len(targets))
        provenance = np.empty(len(targets), dtype=np.int8)
        for t, i in enumerate(targets.tolist()):
            stats = anchor_stats(flat, u, excluded_columns(i, plan))
            cell_values, cell_provenance = estimate_row(flat, u, [i], cfg, stats)
            values[t] = cell_values[0]
            provenance[t] = cell_provenance[0]
        return values, provenance

    matrix = complete_rows(flat, target, row_fn, workers, progress, should_stop)
    return TensorEstimate(matrix, plan)
