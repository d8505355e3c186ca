"""
Synthetic Generator - Latent variable model instances

Every row (and every column, or every tensor slice) carries a latent feature
drawn i.i.d. from a latent measure. The truth is A = f(x_1, x_2, ...) for a
Lipschitz f, the observations are Z = A + eta with bounded zero-mean noise,
and each cell is observed independently with probability p.

All randomness flows from one PCG64 generator seeded with spec.seed, drawn
in a fixed order: latents per dimension, noise for every cell, then the mask.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import truncnorm

from latentknn.errors import ConfigError, DimensionError
from latentknn.obsdata import ObservationMatrix, ObservationTensor

logger = logging.getLogger(__name__)


class LatentFunction(str, Enum):
    ADDITIVE = "additive"
    BILINEAR = "bilinear"
    LOGISTIC_OF_SUM = "logistic-of-sum"
    MAX_MINUS_DISTANCE = "max-minus-distance"
    CUSTOM_TABLE = "custom-table"


class NoiseKind(str, Enum):
    NONE = "none"
    UNIFORM = "uniform"
    TRUNCATED_GAUSSIAN = "truncated-gaussian"


# Lipschitz constants under the sup metric on [0,1]^d
LIPSCHITZ = {
    LatentFunction.ADDITIVE: 1.0,
    LatentFunction.BILINEAR: 1.0,
    LatentFunction.LOGISTIC_OF_SUM: 0.75,
    LatentFunction.MAX_MINUS_DISTANCE: 1.0,
}

LOGISTIC_SLOPE = 3.0


@dataclass(frozen=True)
class UniformCube:
    """Uniform measure on [0,1]^d with the sup metric; diameter 1"""

    d: int = 1
    kind = "uniform-cube"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ConfigError(f"latent dimension must be a positive integer, got {self.d}")

    @property
    def dim(self) -> int:
        return self.d

    @property
    def diameter(self) -> float:
        return 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "d": self.d}


@dataclass(frozen=True)
class FiniteSupport:
    """Finitely many atoms in [0,1]^d with positive probabilities"""

    atoms: Tuple[Tuple[float, ...], ...]
    probs: Tuple[float, ...]
    kind = "finite-support"

    def __post_init__(self):
        atoms = tuple(tuple(float(x) for x in atom) for atom in self.atoms)
        probs = tuple(float(q) for q in self.probs)
        if not atoms or len(atoms) != len(probs):
            raise ConfigError("finite support needs one probability per atom")
        if len({len(atom) for atom in atoms}) != 1 or not atoms[0]:
            raise ConfigError("all atoms must share one positive dimension")
        if any(q <= 0 for q in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
            raise ConfigError(f"atom probabilities must be positive and sum to 1, got {probs}")
        if any(not 0.0 <= x <= 1.0 for atom in atoms for x in atom):
            raise ConfigError("atoms must lie in the unit cube")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return len(self.atoms[0])

    @property
    def diameter(self) -> float:
        points = np.array(self.atoms)
        return float(cdist(points, points, "chebyshev").max())

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "atoms": [list(a) for a in self.atoms], "probs": list(self.probs)}


LatentMeasure = Union[UniformCube, FiniteSupport]


def measure_from_dict(values: Dict[str, Any]) -> LatentMeasure:
    kind = values.get("kind", "uniform-cube")
    if kind == UniformCube.kind:
        return UniformCube(values.get("d", 1))
    if kind == FiniteSupport.kind:
        return FiniteSupport(tuple(map(tuple, values["atoms"])), tuple(values["probs"]))
    raise ConfigError(f"unknown latent measure {kind!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean noise bounded by B_e; gamma is the pre-truncation scale of the gaussian"""

    kind: NoiseKind = NoiseKind.NONE
    bound: float = 0.0
    gamma: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", NoiseKind(self.kind))
        except ValueError:
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.bound < 0:
            raise ConfigError(f"noise bound must be non-negative, got {self.bound}")
        if self.kind is NoiseKind.NONE and self.bound:
            object.__setattr__(self, "bound", 0.0)
        if self.kind is not NoiseKind.NONE and self.bound == 0:
            raise ConfigError(f"{self.kind.value} noise needs a positive bound")
        if self.kind is NoiseKind.TRUNCATED_GAUSSIAN:
            if self.gamma is None:
                object.__setattr__(self, "gamma", self.bound / 2)
            elif self.gamma <= 0:
                raise ConfigError(f"gaussian scale must be positive, got {self.gamma}")

    @property
    def variance(self) -> float:
        """Declared noise variance gamma^2"""
        if self.kind is NoiseKind.UNIFORM:
            return self.bound ** 2 / 3
        if self.kind is NoiseKind.TRUNCATED_GAUSSIAN:
            edge = self.bound / self.gamma
            return float(truncnorm.var(-edge, edge, loc=0.0, scale=self.gamma))
        return 0.0

    def to_dict(self) -> Dict[str, Any]:
        values = {"kind": self.kind.value, "bound": self.bound}
        if self.gamma is not None:
            values["gamma"] = self.gamma
        return values


@dataclass(frozen=True)
class LatentModelSpec:
    """
    Everything needed to draw one instance.

    shape is (m, n) for a matrix or (n_1, ..., n_t) for a tensor. The first
    dimension uses `measure`; the others use `column_measure` when given.
    """

    shape: Tuple[int, ...]
    latent_fn: LatentFunction = LatentFunction.ADDITIVE
    measure: LatentMeasure = field(default_factory=UniformCube)
    column_measure: Optional[LatentMeasure] = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    p: float = 1.0
    seed: int = 0
    table: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) < 2 or any(s < 1 for s in shape):
            raise ConfigError(f"shape must have at least two positive dimensions, got {self.shape}")
        object.__setattr__(self, "shape", shape)
        try:
            object.__setattr__(self, "latent_fn", LatentFunction(self.latent_fn))
        except ValueError:
            raise ConfigError(f"unknown latent function {self.latent_fn!r}")
        if not 0 < self.p <= 1:
            raise ConfigError(f"sample probability must lie in (0, 1], got {self.p}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

        measures = self.measures
        if len({m.dim for m in measures}) != 1:
            raise ConfigError("row and column latent measures must share a dimension")
        if self.latent_fn is LatentFunction.CUSTOM_TABLE:
            self._check_table(measures)

    def _check_table(self, measures: Sequence[LatentMeasure]):
        if len(self.shape) != 2:
            raise ConfigError("custom-table is defined for matrices only")
        if not all(isinstance(m, FiniteSupport) for m in measures):
            raise ConfigError("custom-table needs finite-support measures on both sides")
        if self.table is None:
            raise ConfigError("custom-table needs a value table")
        table = np.asarray(self.table, dtype=np.float64)
        expected = (len(measures[0].atoms), len(measures[1].atoms))
        if table.shape != expected:
            raise ConfigError(f"value table has shape {table.shape}, expected {expected}")
        object.__setattr__(self, "table", tuple(map(tuple, table.tolist())))

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def measures(self) -> List[LatentMeasure]:
        other = self.column_measure or self.measure
        return [self.measure] + [other] * (self.order - 1)

    @property
    def lipschitz(self) -> float:
        if self.latent_fn is LatentFunction.CUSTOM_TABLE:
            return table_lipschitz(np.asarray(self.table), self.measures[0], self.measures[1])
        return LIPSCHITZ[self.latent_fn]

    @property
    def diameter(self) -> float:
        return self.measure.diameter

    @property
    def B0(self) -> float:
        """Uniform bound on |Z(u, i) - Z(v, i)|: L * diam + 2 B_e"""
        return self.lipschitz * self.diameter + 2 * self.noise.bound

    @classmethod
    def from_dict(cls, values: Dict[str, Any], seed: Optional[int] = None) -> "LatentModelSpec":
        """Build from the JSON layout used by the synth command"""
        try:
            shape = values["shape"] if "shape" in values else (values["m"], values["n"])
            column = values.get("column_measure")
            table = values.get("table")
            return cls(
                shape=tuple(shape),
                latent_fn=values.get("latent_fn", LatentFunction.ADDITIVE.value),
                measure=measure_from_dict(values.get("latent_measure", {})),
                column_measure=measure_from_dict(column) if column else None,
                noise=NoiseSpec(**values.get("noise", {})),
                p=float(values.get("p", 1.0)),
                seed=int(seed if seed is not None else values.get("seed", 0)),
                table=tuple(map(tuple, table)) if table is not None else None,
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"invalid model spec: {e}")

    def to_dict(self) -> Dict[str, Any]:
        values = {
            "shape": list(self.shape),
            "latent_fn": self.latent_fn.value,
            "latent_measure": self.measure.to_dict(),
            "noise": self.noise.to_dict(),
            "p": self.p,
            "seed": self.seed,
        }
        if self.column_measure is not None:
            values["column_measure"] = self.column_measure.to_dict()
        if self.table is not None:
            values["table"] = [list(row) for row in self.table]
        return values


@dataclass(frozen=True, eq=False)
class SyntheticInstance:
    spec: LatentModelSpec
    truth: np.ndarray
    observed: Union[ObservationMatrix, ObservationTensor]
    latents: Tuple[np.ndarray, ...]
    types: Tuple[Optional[np.ndarray], ...]
    noise: np.ndarray
    gamma_sq: float
    gamma_sq_empirical: float

    @property
    def row_types(self) -> Optional[np.ndarray]:
        return self.types[0]

    @property
    def column_types(self) -> Optional[np.ndarray]:
        return self.types[1]

    @property
    def lipschitz(self) -> float:
        return self.spec.lipschitz

    @property
    def B0(self) -> float:
        return self.spec.B0

    def summary(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "observed_entries": len(self.observed),
            "lipschitz": self.lipschitz,
            "diameter": self.spec.diameter,
            "B0": self.B0,
            "gamma_sq": self.gamma_sq,
            "gamma_sq_empirical": self.gamma_sq_empirical,
        }


def table_lipschitz(table: np.ndarray, rows: FiniteSupport, cols: FiniteSupport) -> float:
    """Smallest L for which a value table is L-Lipschitz in each argument (1.0 for a constant table)"""
    best = 0.0
    for values, atoms in ((table, rows.atoms), (table.T, cols.atoms)):
        gaps = cdist(np.array(atoms), np.array(atoms), "chebyshev")
        spread = cdist(values, values, "chebyshev")
        apart = gaps > 0
        if apart.any():
            best = max(best, float((spread[apart] / gaps[apart]).max()))
    return best or 1.0


def _along(values: np.ndarray, q: int, order: int) -> np.ndarray:
    """View a length-n_q vector along axis q of an order-dimensional array"""
    shape = [1] * order
    shape[q] = len(values)
    return values.reshape(shape)


def evaluate_latent_fn(
    fn: Union[LatentFunction, str],
    latents: Sequence[np.ndarray],
    types: Optional[Sequence[np.ndarray]] = None,
    table: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Truth array for one latent array (n_q x d) per dimension.

    additive:           sum_q mean(x_q)^(q+1) / (q+1)
    bilinear:           (1/d) sum_k prod_q x_q[k]
    logistic-of-sum:    1 / (1 + exp(-3 sum_q mean(x_q)))
    max-minus-distance: 1 - max_{q>1} |x_q - x_1|_inf
    custom-table:       table[type_1, type_2]
    """
    fn = LatentFunction(fn)
    order = len(latents)

    if fn is LatentFunction.CUSTOM_TABLE:
        if order != 2 or types is None or table is None:
            raise ConfigError("custom-table needs two type arrays and a value table")
        return np.asarray(table)[np.ix_(types[0], types[1])]

    if fn is LatentFunction.ADDITIVE:
        total = 0.0
        for q, x in enumerate(latents):
            total = total + _along(x.mean(axis=1) ** (q + 1) / (q + 1), q, order)
        return np.asarray(total, dtype=np.float64)

    if fn is LatentFunction.BILINEAR:
        letters = "abcdefghijlmnopqrstuvwxyz"[:order]
        spec = ",".join(f"{a}k" for a in letters) + "->" + letters
        return np.einsum(spec, *latents) / latents[0].shape[1]

    if fn is LatentFunction.LOGISTIC_OF_SUM:
        total = sum(_along(x.mean(axis=1), q, order) for q, x in enumerate(latents))
        return 1.0 / (1.0 + np.exp(-LOGISTIC_SLOPE * total))

    # max-minus-distance
    farthest = np.zeros([len(x) for x in latents])
    for q in range(1, order):
        distance = cdist(latents[0], latents[q], "chebyshev")
        shape = [1] * order
        shape[0], shape[q] = distance.shape
        farthest = np.maximum(farthest, distance.reshape(shape))
    return 1.0 - farthest


def _draw_latents(rng: np.random.Generator, measure: LatentMeasure, count: int):
    if isinstance(measure, UniformCube):
        return rng.random((count, measure.d)), None
    types = rng.choice(len(measure.atoms), size=count, p=np.array(measure.probs))
    return np.array(measure.atoms)[types], types


def _draw_noise(rng: np.random.Generator, noise: NoiseSpec, shape: Tuple[int, ...]) -> np.ndarray:
    if noise.kind is NoiseKind.NONE:
        return np.zeros(shape)
    if noise.kind is NoiseKind.UNIFORM:
        return rng.uniform(-noise.bound, noise.bound, size=shape)

    # truncated gaussian by rejection: redraw out-of-range cells until all fit
    draws = rng.normal(0.0, noise.gamma, size=shape)
    outside = np.abs(draws) > noise.bound
    while outside.any():
        draws[outside] = rng.normal(0.0, noise.gamma, size=int(outside.sum()))
        outside = np.abs(draws) > noise.bound
    return draws


def sample_instance(spec: LatentModelSpec) -> SyntheticInstance:
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    latents, types = [], []
    for measure, count in zip(spec.measures, spec.shape):
        x, t = _draw_latents(rng, measure, count)
        latents.append(x)
        types.append(t)

    table = np.asarray(spec.table) if spec.table is not None else None
    truth = evaluate_latent_fn(spec.latent_fn, latents, types, table)
    noise = _draw_noise(rng, spec.noise, spec.shape)
    mask = rng.random(spec.shape) < spec.p

    dense = np.where(mask, truth + noise, np.nan)
    if spec.order == 2:
        observed = ObservationMatrix.from_dense(dense)
    else:
        observed = ObservationTensor.from_dense(dense)

    empirical = float(noise.var()) if spec.noise.kind is not NoiseKind.NONE else 0.0
    logger.info(
        f"Sampled {spec.latent_fn.value} instance {'x'.join(map(str, spec.shape))} "
        f"with {len(observed)} observed cells (seed {spec.seed})"
    )
    for array in [truth, noise] + latents:
        array.setflags(write=False)
    return SyntheticInstance(
        spec=spec,
        truth=truth,
        observed=observed,
        latents=tuple(latents),
        types=tuple(types),
        noise=noise,
        gamma_sq=spec.noise.variance,
        gamma_sq_empirical=empirical,
    )


# ---------------------------------------------------------------------------
# Underestimators and oracles
# ---------------------------------------------------------------------------

def phi_uniform_cube(r: float, d: int) -> float:
    """Ball-mass lower bound min{1, (r/2)^d} of the uniform measure on [0,1]^d"""
    if r <= 0:
        raise ConfigError(f"radius must be positive, got {r}")
    if d < 1:
        raise ConfigError(f"dimension must be positive, got {d}")
    return min(1.0, (r / 2) ** d)


def phi_finite_support(atom_probs: Sequence[float]) -> float:
    """Smallest atom mass, a lower bound on every ball's mass"""
    probs = np.asarray(atom_probs, dtype=np.float64)
    if probs.ndim != 1 or not len(probs) or (probs <= 0).any():
        raise ConfigError("atom probabilities must be a non-empty positive vector")
    if not math.isclose(float(probs.sum()), 1.0, abs_tol=1e-9):
        raise ConfigError(f"atom probabilities sum to {probs.sum()}, not 1")
    return float(probs.min())


def _row_differences(instance: SyntheticInstance, u: int, v: int) -> np.ndarray:
    if instance.truth.ndim != 2:
        raise DimensionError("row oracles are defined for matrix instances")
    m = instance.truth.shape[0]
    for row in (u, v):
        if not 0 <= row < m:
            raise DimensionError(f"row {row} outside 0..{m - 1}")
    return instance.truth[u] - instance.truth[v]


def mu_oracle(instance: SyntheticInstance, u: int, v: int) -> float:
    """Mean of A(u, j) - A(v, j) over all n columns"""
    return float(_row_differences(instance, u, v).mean())


def sigma_sq_oracle(instance: SyntheticInstance, u: int, v: int) -> float:
    """Population variance (denominator n) of A(u, j) - A(v, j) over all n columns"""
    return float(_row_differences(instance, u, v).var())
