"""
Evaluation and Bounds - Error metrics and closed-form MSE bound calculators

Metrics compare an estimate with the truth on a chosen set of cells. The
bound calculators evaluate the user-user MSE guarantees for matrices and
flattened tensors. They are diagnostics: a parameter set outside a
guarantee's hypotheses is still evaluated and the broken hypotheses are
reported through validity flags.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np

from latentknn.errors import BoundDomainError, ConfigError, ShapeMismatchError, UndefinedMetricError
from latentknn.estimator import EstimateMatrix
from latentknn.obsdata import ObservationMatrix

logger = logging.getLogger(__name__)


class Scope(str, Enum):
    ALL = "all"
    ESTIMATED_ONLY = "estimated-only"
    TEST_SET = "test-set"


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _values(estimate: Union[EstimateMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(estimate, EstimateMatrix):
        return estimate.values
    return np.asarray(estimate, dtype=np.float64)


def _scope_mask(
    estimate: Union[EstimateMatrix, np.ndarray],
    shape: Tuple[int, ...],
    scope: Scope,
    test: Optional[ObservationMatrix],
) -> np.ndarray:
    if scope is Scope.ALL:
        return np.ones(shape, dtype=bool)
    if scope is Scope.ESTIMATED_ONLY:
        if not isinstance(estimate, EstimateMatrix):
            raise ConfigError("estimated-only scope needs an EstimateMatrix with provenance")
        return estimate.estimated_mask
    if test is None:
        raise ConfigError("test-set scope needs test entries")
    if test.shape != shape:
        raise ShapeMismatchError(f"test entries are {test.m}x{test.n}, estimate is {shape[0]}x{shape[1]}")
    return test.mask


def _paired(estimate, truth, scope: Scope, test: Optional[ObservationMatrix]) -> Tuple[np.ndarray, np.ndarray]:
    values = _values(estimate)
    if truth is None:
        if test is None:
            raise ConfigError("either a truth array or test entries must be given")
        truth = test.dense
    truth = np.asarray(truth, dtype=np.float64)
    if values.shape != truth.shape:
        raise ShapeMismatchError(f"estimate shape {values.shape} differs from truth shape {truth.shape}")

    mask = _scope_mask(estimate, values.shape, scope, test)
    if not mask.any():
        raise UndefinedMetricError(f"no cells in scope {scope.value}")
    return values[mask], truth[mask]


def mse(
    estimate: Union[EstimateMatrix, np.ndarray],
    truth: Optional[np.ndarray],
    scope: Union[Scope, str] = Scope.ALL,
    test: Optional[ObservationMatrix] = None,
) -> float:
    """
    Mean squared error over the scope.

    With scope test-set and truth None the test entries' own values are the
    truth.
    """
    predicted, actual = _paired(estimate, truth, Scope(scope), test)
    return float(np.mean((predicted - actual) ** 2))


def rmse(estimate, truth: Optional[np.ndarray], test: ObservationMatrix) -> float:
    return math.sqrt(mse(estimate, truth, Scope.TEST_SET, test))


def rse(estimate, truth: Optional[np.ndarray], test: ObservationMatrix) -> float:
    """Squared error over the test set divided by the truth's squared spread around its mean"""
    predicted, actual = _paired(estimate, truth, Scope.TEST_SET, test)
    if len(actual) < 2:
        raise UndefinedMetricError("relative squared error needs at least two test entries")
    spread = float(np.sum((actual - actual.mean()) ** 2))
    if spread == 0.0:
        raise UndefinedMetricError("relative squared error is undefined for constant truth")
    return float(np.sum((predicted - actual) ** 2)) / spread


# ---------------------------------------------------------------------------
# Matrix bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundParams:
    """
    Inputs of the user-user matrix MSE bound.

    phi is the row measure's underestimator at sqrt(zeta / L^2); it is only
    needed for the hypothesis flags. c_beta defaults to beta / (n p^2).
    """

    m: int
    n: int
    p: float
    beta: float
    k: float
    zeta: float
    B0: float
    gamma_sq: float = 0.0
    L: float = 1.0
    phi: Optional[float] = None
    c_phi: float = 1.0
    c_k: float = 0.5
    c_beta: Optional[float] = None
    delta: Optional[float] = None
    delta_prime: Optional[float] = None

    def __post_init__(self):
        if self.m < 2 or self.n < 1:
            raise BoundDomainError(f"need m >= 2 and n >= 1, got m={self.m}, n={self.n}")
        if not 0 < self.p <= 1:
            raise BoundDomainError(f"sample probability must lie in (0, 1], got {self.p}")
        for name in ("beta", "k", "zeta", "B0", "L"):
            if getattr(self, name) <= 0:
                raise BoundDomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gamma_sq < 0:
            raise BoundDomainError(f"gamma_sq must be non-negative, got {self.gamma_sq}")
        if self.c_beta is None:
            object.__setattr__(self, "c_beta", self.beta / (self.n * self.p ** 2))


@dataclass(frozen=True)
class BoundReport:
    F1: float
    F2: float
    F3: float
    constants: Dict[str, float]
    mse_bound: float
    mse_bound_raw: float
    validity_flags: Dict[str, Optional[bool]]
    params: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        values = asdict(self)
        values.update(values.pop("constants"))
        return values


@dataclass(frozen=True)
class TailReport:
    bound: float
    unclamped: float
    deviation_term: float
    exponential_terms: float
    eps: float

    def to_dict(self) -> Dict:
        return asdict(self)


def _outer_form(F1: float, F2: float, F3: float, B0: float) -> float:
    if F1 <= 0:
        raise BoundDomainError(f"F1 must be positive, got {F1}")
    return 2 * F1 * math.log(2 * B0 / F1) + (F1 + F2) ** 2 + 2 * F2 + 4 * B0 ** 2 * F3


def matrix_constants(params: BoundParams) -> Tuple[float, float]:
    """(c1, c2) of the matrix bound"""
    B0 = params.B0
    c1 = min(1 / 24, params.c_phi * (1 - params.c_k) ** 2 / 8)
    c2 = min(params.c_beta ** 2 / 2, 3 / (6 * B0 ** 2 + 4 * B0), 1 / (8 * B0 ** 2 * (2 * B0 ** 2 + 1)))
    return c1, c2


def _matrix_exponential_terms(params: BoundParams, c1: float, c2: float) -> float:
    mp = params.m * params.p
    return 3 * math.exp(-c1 * mp ** (1 / 3)) + (params.m + 4.5 * mp) * math.exp(-c2 * params.beta ** (1 / 3))


def _matrix_flags(params: BoundParams, F1: float) -> Dict[str, Optional[bool]]:
    m, n, p = params.m, params.n, params.p
    delta = params.delta or 0.0
    floor = max(m ** (-1 + delta), n ** (-0.5 + delta))
    phi = params.phi
    flags = {
        "sample_complexity": p >= floor if params.delta else p > floor,
        "beta_window": 0 < params.c_beta < 1,
        "c_k_range": 0 <= params.c_k < 1,
        "c_phi_range": params.c_phi >= 0,
        "phi_condition": None if phi is None else phi >= params.c_phi * (m * p) ** (-2 / 3),
        "k_ceiling": None if phi is None else params.k <= params.c_k / 2 * (m - 1) * p * phi,
        "log_m_condition": None,
        "F1_at_most_half": F1 <= 0.5,
    }
    if params.delta_prime is not None:
        flags["log_m_condition"] = math.log(m) < (n * p * p) ** (params.delta_prime / 3)
    return flags


def matrix_mse_bound(params: BoundParams) -> BoundReport:
    F2 = params.beta ** (-1 / 3)
    F1 = params.zeta + 2 * F2 + params.gamma_sq / params.k
    c1, c2 = matrix_constants(params)
    F3 = _matrix_exponential_terms(params, c1, c2)
    raw = _outer_form(F1, F2, F3, params.B0)

    flags = _matrix_flags(params, F1)
    broken = [name for name, ok in flags.items() if ok is False]
    if broken:
        logger.info(f"Matrix bound evaluated outside its hypotheses: {', '.join(broken)}")
    return BoundReport(F1, F2, F3, {"c1": c1, "c2": c2}, max(raw, 0.0), raw, flags, asdict(params))


def matrix_tail_bound(params: BoundParams, eps: float) -> TailReport:
    """Probability bound for |estimate - A(u, i)| > eps at a single cell"""
    slack = params.beta ** (-1 / 3)
    if eps <= slack:
        raise BoundDomainError(f"eps must exceed beta^(-1/3) = {slack}, got {eps}")
    c1, c2 = matrix_constants(params)
    deviation = (params.zeta + 2 * slack + params.gamma_sq / params.k) / (eps - slack) ** 2
    exponential = _matrix_exponential_terms(params, c1, c2)
    unclamped = deviation + exponential
    return TailReport(min(max(unclamped, 0.0), 1.0), unclamped, deviation, exponential, eps)


def item_item_params(params: BoundParams) -> BoundParams:
    """Item-item bound inputs: the user-user ones with m and n exchanged (c_beta re-derived)"""
    return replace(params, m=params.n, n=params.m, c_beta=None)


@dataclass(frozen=True)
class MatrixCorollary:
    """beta = n p^2 / 2 and k = (mp)^(1/3) / 8, with integer versions for the estimator"""

    beta: float
    k: float

    @property
    def beta_int(self) -> int:
        return max(2, math.floor(self.beta))

    @property
    def k_int(self) -> int:
        return max(1, math.ceil(self.k))


def matrix_corollary_parameters(m: int, n: int, p: float) -> MatrixCorollary:
    if not 0 < p <= 1:
        raise ConfigError(f"sample probability must lie in (0, 1], got {p}")
    return MatrixCorollary(beta=n * p * p / 2, k=(m * p) ** (1 / 3) / 8)


def default_zeta(
    measure_kind: str,
    m: int,
    p: float,
    beta: float,
    L: float = 1.0,
    d: int = 1,
    C: float = 1.0,
) -> float:
    """
    Analysis threshold zeta:
    uniform-cube:   (2L)^2 C^(-2/d) (mp)^(-4/(3d))
    finite-support: beta^(-1/3)
    """
    if measure_kind == "uniform-cube":
        return (2 * L) ** 2 * C ** (-2 / d) * (m * p) ** (-4 / (3 * d))
    if measure_kind == "finite-support":
        return beta ** (-1 / 3)
    raise ConfigError(f"unknown latent measure {measure_kind!r}")


# ---------------------------------------------------------------------------
# Tensor bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TensorBoundParams:
    """
    Inputs of the flattened-tensor MSE bound.

    row_dims are the 0-based dimensions of I1; the rest form I2. phi_q holds
    phi_q(sqrt(zeta / L^2)) for each row dimension, used only by the flags.
    """

    shape: Tuple[int, ...]
    row_dims: Tuple[int, ...]
    p: float
    beta_low: float
    beta_high: float
    k: float
    zeta: float
    gamma_sq: float = 0.0
    L: float = 1.0
    D: float = 1.0
    B_e: float = 0.0
    c_l: float = 0.5
    c_h: float = 2.0
    c_q: float = 1.0
    delta: Optional[float] = None
    phi_q: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        rows = tuple(sorted(int(q) for q in self.row_dims))
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "row_dims", rows)
        if len(shape) < 2 or not rows or len(rows) >= len(shape) or not set(rows) <= set(range(len(shape))):
            raise BoundDomainError(f"row dimensions {rows} are not a proper subset of the {len(shape)} dimensions")
        if not 0 < self.p <= 1:
            raise BoundDomainError(f"sample probability must lie in (0, 1], got {self.p}")
        for name in ("beta_low", "beta_high", "k", "zeta", "L", "D", "c_q"):
            if getattr(self, name) <= 0:
                raise BoundDomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gamma_sq < 0 or self.B_e < 0:
            raise BoundDomainError("gamma_sq and B_e must be non-negative")
        if self.phi_q is not None:
            if len(self.phi_q) != len(rows):
                raise BoundDomainError(f"phi_q needs one value per row dimension ({len(rows)})")
            object.__setattr__(self, "phi_q", tuple(float(x) for x in self.phi_q))

    @property
    def col_dims(self) -> Tuple[int, ...]:
        return tuple(q for q in range(len(self.shape)) if q not in self.row_dims)

    @property
    def t1(self) -> int:
        return len(self.row_dims)

    @property
    def t2(self) -> int:
        return len(self.col_dims)

    @property
    def m(self) -> int:
        return math.prod(self.shape[q] for q in self.row_dims)

    @property
    def n_prime(self) -> int:
        return math.prod(self.shape[q] - 1 for q in self.col_dims)

    @property
    def theta(self) -> float:
        if any(self.shape[q] < 2 for q in self.col_dims):
            return math.inf
        return sum(1 / (self.shape[q] - 1) for q in self.col_dims)

    @property
    def n_q_star(self) -> int:
        """Smallest row-side dimension"""
        return min(self.shape[q] for q in self.row_dims)

    @property
    def B0(self) -> float:
        return self.L * self.D + 2 * self.B_e


def tensor_constants(params: TensorBoundParams) -> Dict[str, float]:
    L, D, B_e, t1, t2 = params.L, params.D, params.B_e, params.t1, params.t2
    LD = L * D
    C1 = min((1 - params.c_l) ** 2 / 2, (params.c_h - 1) ** 2 / 3)
    C2 = min(
        1 / (8 * LD ** 2 * t2 + 16 * B_e ** 2),
        1 / (32 * LD ** 2 * (3 * LD + 4 * B_e) ** 2 * t2 + 64 * B_e ** 2 * (2 * LD + 5 * B_e) ** 2),
    )
    C3 = min(1 / (32 * (LD + 2 * B_e) ** 2), 1 / (128 * (LD + 2 * B_e) ** 4))
    C4 = (1 - 2 ** (-1 / t1)) ** 2 / 2 * params.c_q
    return {"C1": C1, "C2": C2, "C3": C3, "C4": C4}


def _tensor_flags(params: TensorBoundParams, F1: float) -> Dict[str, Optional[bool]]:
    m, n_prime, p = params.m, params.n_prime, params.p
    delta = params.delta or 0.0
    spread = n_prime * p * p
    root = math.sqrt(n_prime)
    flags = {
        "sample_complexity": max(m ** (-1 + delta), n_prime ** (-0.5 + delta)) <= p <= n_prime ** (-1 / 6 - delta),
        "beta_low_window": 2 <= params.beta_low <= params.c_l * min(spread, root),
        "beta_high_window": params.c_h * max(root, spread) <= params.beta_high <= n_prime ** (2 / 3 - delta),
        "c_l_range": 0 < params.c_l < 1,
        "c_h_range": params.c_h > 1,
        "theta_below_one": params.theta < 1,
        "zeta_condition": None,
        "k_ceiling": None,
        "F1_at_most_half": F1 <= 0.5,
    }
    if params.phi_q is not None:
        sizes = [params.shape[q] for q in params.row_dims]
        exponent = -math.log(m * p) / (2 * math.log(m))
        flags["zeta_condition"] = all(phi >= params.c_q * size ** exponent for phi, size in zip(params.phi_q, sizes))
        flags["k_ceiling"] = params.k <= p / 8 * math.prod(size * phi for size, phi in zip(sizes, params.phi_q))
    return flags


def tensor_mse_bound(params: TensorBoundParams) -> BoundReport:
    theta = params.theta
    if theta >= 1:
        raise BoundDomainError(f"theta = {theta} must be below 1")
    n_star = params.n_q_star
    if n_star < 2:
        raise BoundDomainError("every row-side dimension must have at least 2 entries")

    m, p, n_prime, k = params.m, params.p, params.n_prime, params.k
    F2 = max(
        (n_star - 1) ** (-1 / 3),
        (n_prime ** 2 / params.beta_high ** 3) ** (-1 / 3),
        params.beta_low ** (-1 / 3),
    )
    F1 = ((1 + theta) * params.zeta + 2 * F2) / (1 - theta) + params.gamma_sq / k

    C = tensor_constants(params)
    F3 = (
        4 * (m - 1) * math.exp(-C["C1"] * n_prime * p * p)
        + 2 * math.exp(-m * p / 24)
        + 6 * (m - 1) * p * math.exp(-C["C2"] * (n_star - 1) ** (1 / 3))
        + 6 * (m - 1) * p * math.exp(
            -C["C3"] * min(n_prime ** (2 / 3) / (4 * params.beta_high), params.beta_low ** (1 / 3) / 4)
        )
        + params.t1 * math.exp(-C["C4"] * n_star ** 0.5)
        + math.exp(-k / 8)
    )
    raw = _outer_form(F1, F2, F3, params.B0)

    constants = dict(C, theta=theta, n_prime=float(n_prime), B0=params.B0)
    flags = _tensor_flags(params, F1)
    return BoundReport(F1, F2, F3, constants, max(raw, 0.0), raw, flags, asdict(params))
