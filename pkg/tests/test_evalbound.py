import math

import numpy as np
import pytest
from pytest import approx, mark

from latentknn.errors import BoundDomainError, ConfigError, ShapeMismatchError, UndefinedMetricError
from latentknn.estimator import EstimateMatrix, Provenance
from latentknn.evalbound import (
    BoundParams,
    TensorBoundParams,
    default_zeta,
    item_item_params,
    matrix_constants,
    matrix_corollary_parameters,
    matrix_mse_bound,
    matrix_tail_bound,
    mse,
    rmse,
    rse,
    tensor_constants,
    tensor_mse_bound,
)
from latentknn.obsdata import ObservationMatrix

ESTIMATE = np.array([[1.0, 2.0], [3.0, 4.0]])
TRUTH = np.array([[1.0, 2.0], [3.0, 6.0]])
TEST = ObservationMatrix.from_entries(2, 2, [(0, 0, 1.0), (1, 1, 6.0)])


def golden_params(**overrides):
    values = dict(
        m=10_000, n=10_000, p=0.1, beta=50, k=1.25, B0=2.0,
        gamma_sq=1 / 12, L=1.0, zeta=4 * 1000 ** (-4 / 3),
    )
    values.update(overrides)
    return BoundParams(**values)


def test_mse_all_cells():
    assert mse(ESTIMATE, TRUTH) == 1.0
    assert mse(ESTIMATE, TRUTH, "all") == 1.0


def test_mse_test_set():
    assert mse(ESTIMATE, TRUTH, "test-set", TEST) == 2.0
    # the test entries stand in for the truth
    assert mse(ESTIMATE, None, "test-set", TEST) == 2.0
    assert rmse(ESTIMATE, TRUTH, TEST) == approx(math.sqrt(2.0))


def test_mse_estimated_only():
    provenance = np.array([[Provenance.OBSERVED, Provenance.ESTIMATED],
                           [Provenance.FALLBACK, Provenance.ESTIMATED]], dtype=np.int8)
    estimate = EstimateMatrix(ESTIMATE.copy(), provenance)
    assert mse(estimate, TRUTH, "estimated-only") == 2.0
    with pytest.raises(ConfigError):
        mse(ESTIMATE, TRUTH, "estimated-only")


def test_rse():
    # test truths (1, 6): spread 12.5, squared error 4
    assert rse(ESTIMATE, TRUTH, TEST) == approx(0.32)


def test_rse_undefined():
    constant = ObservationMatrix.from_entries(2, 2, [(0, 0, 1.0), (0, 1, 1.0)])
    with pytest.raises(UndefinedMetricError):
        rse(ESTIMATE, None, constant)
    single = ObservationMatrix.from_entries(2, 2, [(0, 0, 1.0)])
    with pytest.raises(UndefinedMetricError):
        rse(ESTIMATE, None, single)


def test_metric_errors():
    with pytest.raises(UndefinedMetricError):
        mse(ESTIMATE, TRUTH, "test-set", ObservationMatrix.empty(2, 2))
    with pytest.raises(ShapeMismatchError):
        mse(ESTIMATE, np.zeros((3, 2)))
    with pytest.raises(ShapeMismatchError):
        mse(ESTIMATE, TRUTH, "test-set", ObservationMatrix.empty(3, 3))
    with pytest.raises(ConfigError):
        mse(ESTIMATE, TRUTH, "test-set")
    with pytest.raises(ValueError):
        mse(ESTIMATE, TRUTH, "somewhere")


def test_F2_is_cube_root():
    report = matrix_mse_bound(golden_params())
    assert report.F2 == approx(0.2714417616594907, rel=1e-12)


def test_matrix_constants():
    params = golden_params()
    assert params.c_beta == approx(0.5)
    c1, c2 = matrix_constants(params)
    assert c1 == approx(1 / 32)
    assert c2 == approx(1 / 288)


def test_matrix_bound_golden():
    params = golden_params()
    report = matrix_mse_bound(params)

    F2 = 50 ** (-1 / 3)
    F1 = 4e-4 + 2 * F2 + (1 / 12) / 1.25
    F3 = 3 * math.exp(-(1 / 32) * 1000 ** (1 / 3)) + 14_500 * math.exp(-(1 / 288) * 50 ** (1 / 3))
    raw = 2 * F1 * math.log(4.0 / F1) + (F1 + F2) ** 2 + 2 * F2 + 16 * F3

    assert report.F1 == approx(F1, rel=1e-12)
    assert report.F3 == approx(F3, rel=1e-12)
    assert report.mse_bound_raw == approx(raw, rel=1e-12)
    assert report.mse_bound == report.mse_bound_raw
    assert report.validity_flags["sample_complexity"] is True
    assert report.validity_flags["beta_window"] is True
    assert report.validity_flags["F1_at_most_half"] is False
    assert report.validity_flags["phi_condition"] is None


def test_bound_report_layout():
    values = matrix_mse_bound(golden_params()).to_dict()
    for key in ("F1", "F2", "F3", "c1", "c2", "mse_bound", "mse_bound_raw", "validity_flags", "params"):
        assert key in values
    assert values["params"]["m"] == 10_000


def test_phi_flags_evaluated_when_given():
    report = matrix_mse_bound(golden_params(phi=0.5))
    assert report.validity_flags["phi_condition"] is True
    assert report.validity_flags["k_ceiling"] is True


def test_bound_params_domain():
    with pytest.raises(BoundDomainError):
        golden_params(m=1)
    with pytest.raises(BoundDomainError):
        golden_params(p=0.0)
    with pytest.raises(BoundDomainError):
        golden_params(k=0)
    with pytest.raises(BoundDomainError):
        golden_params(gamma_sq=-1.0)


def test_tail_bound():
    params = golden_params()
    slack = 50 ** (-1 / 3)
    with pytest.raises(BoundDomainError):
        matrix_tail_bound(params, slack)
    report = matrix_tail_bound(params, 0.5)
    F1 = 4e-4 + 2 * slack + (1 / 12) / 1.25
    assert report.deviation_term == approx(F1 / (0.5 - slack) ** 2)
    # the exponential terms dominate at this size, so the probability clamps
    assert report.unclamped > 1
    assert report.bound == 1.0


def test_item_item_swaps_dimensions():
    params = golden_params(m=100, n=400)
    swapped = item_item_params(params)
    assert (swapped.m, swapped.n) == (400, 100)
    assert swapped.c_beta == approx(50 / (100 * 0.01))


def test_corollary_parameters():
    params = matrix_corollary_parameters(10_000, 10_000, 0.1)
    assert params.beta == approx(50)
    assert params.k == approx(1.25)
    assert params.beta_int == 50
    assert params.k_int == 2
    small = matrix_corollary_parameters(10, 10, 0.1)
    assert small.beta_int == 2
    assert small.k_int == 1
    with pytest.raises(ConfigError):
        matrix_corollary_parameters(10, 10, 1.5)


def test_default_zeta():
    assert default_zeta("uniform-cube", 10_000, 0.1, 50) == approx(4e-4)
    assert default_zeta("uniform-cube", 10_000, 0.1, 50, L=0.5, d=2) == approx(1000 ** (-2 / 3))
    assert default_zeta("finite-support", 10_000, 0.1, 8) == approx(0.5)
    with pytest.raises(ConfigError):
        default_zeta("sphere", 10, 0.5, 2)


def tensor_params(**overrides):
    values = dict(shape=(20, 20, 20), row_dims=(0,), p=0.5, beta_low=9, beta_high=181, k=1, zeta=0.01)
    values.update(overrides)
    return TensorBoundParams(**values)


def test_tensor_bound_golden():
    params = tensor_params()
    assert (params.m, params.n_prime, params.t1, params.t2) == (20, 361, 1, 2)
    theta = 2 / 19
    assert params.theta == approx(theta)

    report = tensor_mse_bound(params)
    F2 = max(19 ** (-1 / 3), (361 ** 2 / 181 ** 3) ** (-1 / 3), 9 ** (-1 / 3))
    F1 = ((1 + theta) * 0.01 + 2 * F2) / (1 - theta)
    assert report.F2 == approx(F2, rel=1e-12)
    assert report.F1 == approx(F1, rel=1e-12)

    C = tensor_constants(params)
    assert C["C1"] == approx(0.125)
    assert C["C2"] == approx(1 / 576)
    assert C["C3"] == approx(1 / 128)
    assert C["C4"] == approx(0.125)
    F3 = (
        4 * 19 * math.exp(-0.125 * 361 * 0.25)
        + 2 * math.exp(-20 * 0.5 / 24)
        + 6 * 19 * 0.5 * math.exp(-(1 / 576) * 19 ** (1 / 3))
        + 6 * 19 * 0.5 * math.exp(-(1 / 128) * min(361 ** (2 / 3) / (4 * 181), 9 ** (1 / 3) / 4))
        + math.exp(-0.125 * 20 ** 0.5)
        + math.exp(-1 / 8)
    )
    assert report.F3 == approx(F3, rel=1e-12)
    raw = 2 * F1 * math.log(2 / F1) + (F1 + F2) ** 2 + 2 * F2 + 4 * F3
    assert report.mse_bound_raw == approx(raw, rel=1e-12)
    assert report.constants["theta"] == approx(theta)


def test_tensor_flags():
    flags = tensor_mse_bound(tensor_params()).validity_flags
    assert flags["theta_below_one"] is True
    assert flags["beta_low_window"] is True
    assert flags["zeta_condition"] is None
    with_phi = tensor_mse_bound(tensor_params(phi_q=(0.5,))).validity_flags
    assert with_phi["zeta_condition"] is not None


@mark.parametrize("shape", [(20, 1, 20), (5, 2, 2)])
def test_tensor_theta_domain(shape):
    with pytest.raises(BoundDomainError):
        tensor_mse_bound(tensor_params(shape=shape))


def test_tensor_small_row_dimension():
    with pytest.raises(BoundDomainError):
        tensor_mse_bound(tensor_params(shape=(1, 20, 20)))


@mark.parametrize("row_dims", [(), (0, 1, 2), (3,)])
def test_tensor_row_dims_checked(row_dims):
    with pytest.raises(BoundDomainError):
        tensor_params(row_dims=row_dims)


def test_tensor_phi_length_checked():
    with pytest.raises(BoundDomainError):
        tensor_params(phi_q=(0.5, 0.5))
