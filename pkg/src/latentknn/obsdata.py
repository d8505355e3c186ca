"""
Observation Data - Partially observed matrices and tensors

Holds the observed entries Z(u, i) together with the realized index set D,
reads and writes the supported file formats and builds holdout splits.

Indices are 0-based in the Python API and 1-based in every file.
"""

import io
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, FrozenSet, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from latentknn.errors import (
    ConfigError,
    DataError,
    DimensionError,
    DuplicateEntryError,
    IndexOutOfRangeError,
    MissingEntryError,
    ParseError,
)

logger = logging.getLogger(__name__)

Source = Union[str, Path, bytes, BinaryIO]
Target = Union[str, Path, BinaryIO]

NA_TOKEN = "NA"


class FileFormat(str, Enum):
    """Supported matrix file formats"""

    TRIPLET_CSV = "triplet-csv"
    MOVIELENS_DAT = "movielens-dat"
    DENSE_CSV = "dense-csv"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """
    An m x n real matrix of which only some entries are observed.

    Entries are kept sorted by (row, col) so every derived view is
    deterministic. Instances are immutable.
    """

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise DimensionError(f"negative dimensions {self.m}x{self.n}")

        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not len(rows) == len(cols) == len(values):
            raise DataError("rows, cols and values must have equal length")

        if len(rows):
            outside = (rows < 0) | (rows >= self.m) | (cols < 0) | (cols >= self.n)
            if outside.any():
                k = int(np.flatnonzero(outside)[0])
                raise DimensionError(
                    f"entry ({rows[k] + 1},{cols[k] + 1}) outside {self.m}x{self.n}"
                )
            if not np.isfinite(values).all():
                k = int(np.flatnonzero(~np.isfinite(values))[0])
                raise DataError(f"entry ({rows[k] + 1},{cols[k] + 1}) is not finite")

        keys = rows * self.n + cols
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        repeated = np.flatnonzero(keys[1:] == keys[:-1])
        if repeated.size:
            u, i = divmod(int(keys[repeated[0]]), self.n)
            raise DuplicateEntryError(f"duplicate entry ({u + 1},{i + 1})")

        object.__setattr__(self, "rows", _frozen(rows[order]))
        object.__setattr__(self, "cols", _frozen(cols[order]))
        object.__setattr__(self, "values", _frozen(values[order]))

    @classmethod
    def from_entries(cls, m: int, n: int, entries: Iterable[Tuple[int, int, float]]) -> "ObservationMatrix":
        """Build from (row, col, value) triples with 0-based indices"""
        entries = list(entries)
        if not entries:
            return cls.empty(m, n)
        rows, cols, values = zip(*entries)
        return cls(m, n, np.array(rows), np.array(cols), np.array(values, dtype=np.float64))

    @classmethod
    def from_dense(cls, array: np.ndarray) -> "ObservationMatrix":
        """Build from a dense array where NaN marks an unobserved cell"""
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise DimensionError(f"expected a 2-d array, got {array.ndim}-d")
        rows, cols = np.nonzero(~np.isnan(array))
        return cls(array.shape[0], array.shape[1], rows, cols, array[rows, cols])

    @classmethod
    def empty(cls, m: int, n: int) -> "ObservationMatrix":
        return cls(m, n, np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.m, self.n)

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"ObservationMatrix({self.m}x{self.n}, {len(self)} observed)"

    def entries(self) -> Iterator[Tuple[int, int, float]]:
        for u, i, value in zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()):
            yield u, i, value

    def entry_set(self) -> FrozenSet[Tuple[int, int, float]]:
        return frozenset(self.entries())

    @cached_property
    def mask(self) -> np.ndarray:
        """Boolean m x n array of observed cells"""
        mask = np.zeros((self.m, self.n), dtype=bool)
        mask[self.rows, self.cols] = True
        return _frozen(mask)

    @cached_property
    def dense(self) -> np.ndarray:
        """m x n array with NaN in unobserved cells"""
        dense = np.full((self.m, self.n), np.nan)
        dense[self.rows, self.cols] = self.values
        return _frozen(dense)

    @cached_property
    def filled(self) -> np.ndarray:
        """m x n array with 0.0 in unobserved cells"""
        filled = np.zeros((self.m, self.n))
        filled[self.rows, self.cols] = self.values
        return _frozen(filled)

    def check_row(self, u: int):
        if not 0 <= u < self.m:
            raise IndexOutOfRangeError(f"row {u} outside 0..{self.m - 1}")

    def check_col(self, i: int):
        if not 0 <= i < self.n:
            raise IndexOutOfRangeError(f"column {i} outside 0..{self.n - 1}")

    def is_observed(self, u: int, i: int) -> bool:
        self.check_row(u)
        self.check_col(i)
        return bool(self.mask[u, i])

    def value(self, u: int, i: int) -> float:
        """Observed value Z(u, i)"""
        if not self.is_observed(u, i):
            raise MissingEntryError(f"entry ({u},{i}) is not observed")
        return float(self.dense[u, i])

    def global_mean(self) -> float:
        """Mean of all observed values, 0.0 for an empty matrix"""
        if not len(self):
            return 0.0
        return float(np.mean(self.values))

    def take(self, selection: np.ndarray) -> "ObservationMatrix":
        """Matrix with the entries picked by a boolean or integer selection"""
        return ObservationMatrix(
            self.m, self.n, self.rows[selection], self.cols[selection], self.values[selection]
        )

    def transpose(self) -> "ObservationMatrix":
        return ObservationMatrix(self.n, self.m, self.cols, self.rows, self.values)

    def same_entries(self, other: "ObservationMatrix") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class ObservationTensor:
    """A partially observed tensor of order t >= 2"""

    shape: Tuple[int, ...]
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) < 2:
            raise DimensionError(f"a tensor needs order >= 2, got {len(shape)}")
        if any(s < 1 for s in shape):
            raise DimensionError(f"tensor dimensions must be positive, got {shape}")

        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, len(shape))
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(coords) != len(values):
            raise DataError("coords and values must have equal length")

        if len(values):
            outside = ((coords < 0) | (coords >= np.array(shape))).any(axis=1)
            if outside.any():
                k = int(np.flatnonzero(outside)[0])
                raise DimensionError(f"coordinate {tuple(coords[k] + 1)} outside {shape}")
            if not np.isfinite(values).all():
                k = int(np.flatnonzero(~np.isfinite(values))[0])
                raise DataError(f"coordinate {tuple(coords[k] + 1)} is not finite")

        keys = np.ravel_multi_index(coords.T, shape) if len(values) else np.empty(0, np.int64)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        repeated = np.flatnonzero(keys[1:] == keys[:-1])
        if repeated.size:
            alpha = np.unravel_index(int(keys[repeated[0]]), shape)
            raise DuplicateEntryError(f"duplicate coordinate {tuple(int(a) + 1 for a in alpha)}")

        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "coords", _frozen(coords[order]))
        object.__setattr__(self, "values", _frozen(values[order]))

    @classmethod
    def from_dense(cls, array: np.ndarray) -> "ObservationTensor":
        array = np.asarray(array, dtype=np.float64)
        observed = np.argwhere(~np.isnan(array))
        return cls(array.shape, observed, array[tuple(observed.T)])

    @property
    def order(self) -> int:
        return len(self.shape)

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"ObservationTensor({'x'.join(map(str, self.shape))}, {len(self)} observed)"

    @cached_property
    def dense(self) -> np.ndarray:
        dense = np.full(self.shape, np.nan)
        dense[tuple(self.coords.T)] = self.values
        return _frozen(dense)

    def entry_set(self) -> FrozenSet[Tuple[Tuple[int, ...], float]]:
        return frozenset(
            (tuple(alpha), value) for alpha, value in zip(self.coords.tolist(), self.values.tolist())
        )


@dataclass(frozen=True, eq=False)
class HoldoutSplit:
    """Disjoint train/test partition of one matrix's entries"""

    train: ObservationMatrix
    test: ObservationMatrix
    seed: int
    fraction: float


def transpose(obs: ObservationMatrix) -> ObservationMatrix:
    """Swap rows and columns: entry (u, i, v) becomes (i, u, v)"""
    return obs.transpose()


def split_holdout(obs: ObservationMatrix, fraction: float, seed: int) -> HoldoutSplit:
    """
    Withhold floor(fraction * |entries|) entries as a test set.

    The test entries are a uniform sample without replacement drawn from a
    PCG64 generator seeded with `seed` (a permutation of the canonical
    entry order), so splits are reproducible across platforms.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"holdout fraction must lie in [0, 1], got {fraction}")
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")

    total = len(obs)
    count = math.floor(round(fraction * total, 9))
    rng = np.random.Generator(np.random.PCG64(seed))
    in_test = np.zeros(total, dtype=bool)
    in_test[rng.permutation(total)[:count]] = True

    logger.debug(f"Holdout split: {count} of {total} entries withheld (seed {seed})")
    return HoldoutSplit(obs.take(~in_test), obs.take(in_test), seed, fraction)


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------

def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        data = source
    elif isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            data = f.read()
    else:
        data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.lstrip("﻿")


def _numbered_lines(text: str) -> List[Tuple[int, str]]:
    """Non-blank lines paired with their 1-based line number"""
    return [(no, line.strip()) for no, line in enumerate(text.splitlines(), start=1) if line.strip()]


def _parse_dims(line: str, line_no: int, order: int = None) -> Tuple[int, ...]:
    tokens = [token.strip() for token in line.split(",")]
    try:
        dims = tuple(int(token) for token in tokens)
    except ValueError:
        raise ParseError(f"malformed dimension header {line!r}", line=line_no)
    if order is not None and len(dims) != order:
        raise ParseError(f"expected {order} dimensions in header, got {len(dims)}", line=line_no)
    if any(d < 0 for d in dims):
        raise ParseError(f"negative dimension in header {line!r}", line=line_no)
    return dims


def _records(lines: Sequence[Tuple[int, str]], sep: str, width: int) -> pd.DataFrame:
    """Parse numbered lines into a string frame of exactly `width` columns"""
    for no, line in lines:
        fields = line.count(sep) + 1
        if fields != width:
            raise ParseError(f"expected {width} fields, got {fields}", line=no)
    if not lines:
        return pd.DataFrame({k: pd.Series(dtype=str) for k in range(width)})

    frame = pd.read_csv(
        io.StringIO("\n".join(line for _, line in lines)),
        sep=sep,
        header=None,
        dtype=str,
        keep_default_na=False,
        engine="python" if len(sep) > 1 else "c",
    )
    return frame.apply(lambda column: column.str.strip())


def _index_column(frame: pd.DataFrame, column: int, numbers: np.ndarray, what: str) -> np.ndarray:
    text = frame[column]
    valid = text.str.fullmatch(r"[+-]?\d+")
    if not valid.all():
        k = int(np.flatnonzero(~valid.to_numpy())[0])
        raise ParseError(f"{what} {text.iloc[k]!r} is not an integer", line=int(numbers[k]))
    return text.astype(np.int64).to_numpy()


def _value_column(frame: pd.DataFrame, column: int, numbers: np.ndarray) -> np.ndarray:
    parsed = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(parsed)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ParseError(f"value {frame[column].iloc[k]!r} is not a finite number", line=int(numbers[k]))
    return parsed


def _check_index_range(index: np.ndarray, limit: int, numbers: np.ndarray, what: str):
    outside = (index < 1) | (index > limit)
    if outside.any():
        k = int(np.flatnonzero(outside)[0])
        raise DimensionError(f"line {numbers[k]}: {what} {index[k]} outside declared range 1..{limit}")


def _check_duplicates(keys: pd.DataFrame, numbers: np.ndarray):
    repeated = keys.duplicated(keep="first").to_numpy()
    if repeated.any():
        k = int(np.flatnonzero(repeated)[0])
        first = keys.iloc[: k].eq(keys.iloc[k]).all(axis=1).to_numpy()
        earlier = int(numbers[np.flatnonzero(first)[0]])
        key = ",".join(str(v) for v in keys.iloc[k].tolist())
        raise DuplicateEntryError(f"line {numbers[k]}: entry ({key}) already given on line {earlier}")


def _load_triplet(text: str) -> ObservationMatrix:
    lines = _numbered_lines(text)
    if not lines:
        raise ParseError("missing 'm,n' header", line=1)
    header_no, header = lines[0]
    m, n = _parse_dims(header, header_no, order=2)

    body = lines[1:]
    numbers = np.array([no for no, _ in body], dtype=np.int64)
    frame = _records(body, ",", 3)
    rows = _index_column(frame, 0, numbers, "row")
    cols = _index_column(frame, 1, numbers, "column")
    values = _value_column(frame, 2, numbers)

    _check_index_range(rows, m, numbers, "row")
    _check_index_range(cols, n, numbers, "column")
    _check_duplicates(pd.DataFrame({"u": rows, "i": cols}), numbers)
    return ObservationMatrix(m, n, rows - 1, cols - 1, values)


def _load_movielens(text: str) -> ObservationMatrix:
    body = _numbered_lines(text)
    numbers = np.array([no for no, _ in body], dtype=np.int64)
    frame = _records(body, "::", 4)
    users = _index_column(frame, 0, numbers, "user")
    items = _index_column(frame, 1, numbers, "item")
    ratings = _value_column(frame, 2, numbers)

    m = int(users.max()) if len(users) else 0
    n = int(items.max()) if len(items) else 0
    _check_index_range(users, m, numbers, "user")
    _check_index_range(items, n, numbers, "item")
    _check_duplicates(pd.DataFrame({"u": users, "i": items}), numbers)
    return ObservationMatrix(m, n, users - 1, items - 1, ratings)


def _load_dense(text: str) -> ObservationMatrix:
    lines = [(no, line) for no, line in enumerate(text.splitlines(), start=1)]
    while lines and not lines[-1][1].strip():
        lines.pop()
    if not lines:
        raise ParseError("dense-csv input is empty", line=1)
    for no, line in lines:
        if not line.strip():
            raise ParseError("blank line inside dense-csv", line=no)

    width = lines[0][1].count(",") + 1
    numbers = np.array([no for no, _ in lines], dtype=np.int64)
    frame = _records(lines, ",", width)

    missing = frame.eq(NA_TOKEN).to_numpy()
    parsed = frame.apply(lambda column: pd.to_numeric(column, errors="coerce")).to_numpy(dtype=np.float64)
    bad = ~missing & ~np.isfinite(parsed)
    if bad.any():
        u, i = np.argwhere(bad)[0]
        raise ParseError(
            f"column {i + 1}: token {frame.iat[u, i]!r} is neither a number nor {NA_TOKEN}",
            line=int(numbers[u]),
        )
    parsed[missing] = np.nan
    return ObservationMatrix.from_dense(parsed)


_LOADERS = {
    FileFormat.TRIPLET_CSV: _load_triplet,
    FileFormat.MOVIELENS_DAT: _load_movielens,
    FileFormat.DENSE_CSV: _load_dense,
}


def load_observations(source: Source, format: Union[FileFormat, str] = FileFormat.TRIPLET_CSV) -> ObservationMatrix:
    """
    Parse a matrix file.

    triplet-csv:   first line "m,n", then "u,i,value" per entry
    movielens-dat: "user::item::rating::timestamp", timestamp ignored
    dense-csv:     m lines of n comma separated tokens, "NA" = unobserved
    """
    try:
        fmt = FileFormat(format)
    except ValueError:
        raise ConfigError(f"unknown matrix format {format!r}")
    obs = _LOADERS[fmt](_read_text(source))
    logger.debug(f"Loaded {obs!r} from {fmt.value}")
    return obs


def load_tensor(source: Source) -> ObservationTensor:
    """Parse a tensor coordinate file: header "n_1,...,n_t", then "a_1,...,a_t,value" lines"""
    lines = _numbered_lines(_read_text(source))
    if not lines:
        raise ParseError("missing tensor shape header", line=1)
    header_no, header = lines[0]
    shape = _parse_dims(header, header_no)
    if len(shape) < 2:
        raise ParseError(f"a tensor needs at least 2 dimensions, header gives {len(shape)}", line=header_no)

    body = lines[1:]
    numbers = np.array([no for no, _ in body], dtype=np.int64)
    frame = _records(body, ",", len(shape) + 1)
    coords = np.column_stack(
        [_index_column(frame, q, numbers, f"coordinate {q + 1}") for q in range(len(shape))]
    ) if body else np.empty((0, len(shape)), dtype=np.int64)
    values = _value_column(frame, len(shape), numbers)

    for q, size in enumerate(shape):
        _check_index_range(coords[:, q], size, numbers, f"coordinate {q + 1}")
    _check_duplicates(pd.DataFrame(coords), numbers)
    return ObservationTensor(shape, coords - 1, values)


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

def _format_values(values: np.ndarray) -> List[str]:
    # repr gives the shortest string that round-trips
    return [repr(float(v)) for v in values]


def _csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(header=False, index=False, lineterminator="\n")


def _write_text(target: Target, text: str):
    data = text.encode("utf-8")
    if isinstance(target, (str, Path)):
        path = Path(target)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    else:
        target.write(data)


def format_dense(values: np.ndarray) -> str:
    """Render a dense array as dense-csv text, NaN written as NA"""
    values = np.asarray(values, dtype=np.float64)
    cells = np.full(values.shape, NA_TOKEN, dtype=object)
    observed = ~np.isnan(values)
    cells[observed] = _format_values(values[observed])
    return _csv(pd.DataFrame(cells))


def save_observations(obs: ObservationMatrix, target: Target, format: Union[FileFormat, str] = FileFormat.TRIPLET_CSV):
    """Serialize a matrix in one of the supported formats"""
    fmt = FileFormat(format)
    if fmt is FileFormat.TRIPLET_CSV:
        body = _csv(pd.DataFrame({"u": obs.rows + 1, "i": obs.cols + 1, "v": _format_values(obs.values)}))
        text = f"{obs.m},{obs.n}\n" + (body if len(obs) else "")
    elif fmt is FileFormat.MOVIELENS_DAT:
        text = "".join(
            f"{u + 1}::{i + 1}::{v}::0\n"
            for (u, i, _), v in zip(obs.entries(), _format_values(obs.values))
        )
    else:
        text = format_dense(obs.dense)
    _write_text(target, text)


def save_dense(values: np.ndarray, target: Target):
    """Write a full array (for example an estimate or a truth matrix) as dense-csv"""
    _write_text(target, format_dense(values))


def save_tensor(tobs: ObservationTensor, target: Target):
    header = ",".join(str(s) for s in tobs.shape) + "\n"
    if not len(tobs):
        _write_text(target, header)
        return
    frame = pd.DataFrame(tobs.coords + 1)
    frame["value"] = _format_values(tobs.values)
    _write_text(target, header + _csv(frame))
