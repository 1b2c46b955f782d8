"""Recovery error metrics and their debias/grid-search oracles."""

import numpy as np
import pytest

from bgvamp import dnmse, nmse, nmse_dict, nmse_product

from oracles import debias_grid


# ---------------------------------------------------------------------------
# plain and debiased vector metrics
# ---------------------------------------------------------------------------


def test_nmse_of_exact_estimate_is_minus_infinity():
    assert nmse([1.0, 2.0], [1.0, 2.0]) == -np.inf


def test_nmse_of_zero_estimate_is_zero_db():
    assert nmse([1.0, 2.0], [0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)


def test_nmse_equals_dnmse_at_unit_gain():
    # a residual orthogonal to the estimate makes the optimal gain exactly 1
    est = np.array([2.0, 0.0])
    truth = est + np.array([0.0, 3.0])
    assert dnmse(truth, est) == pytest.approx(nmse(truth, est), abs=1e-12)


def test_dnmse_closed_form_small_case():
    # gain 0.5 leaves residual (0, 1); 10*log10(1/sqrt(2)) = -1.5051...
    value = dnmse([1.0, 1.0], [2.0, 0.0])
    assert value == pytest.approx(-1.5051499783199058, abs=1e-12)


def test_dnmse_is_scale_invariant():
    rng = np.random.default_rng(26)
    truth = rng.standard_normal(10)
    for alpha in (2.0, -0.5, 1024.0):
        # gains whose reciprocal is exact in binary cancel exactly
        assert dnmse(truth, alpha * truth) == -np.inf
    for alpha in (-0.3, 1e6, np.pi):
        # any other gain cancels to rounding noise
        assert dnmse(truth, alpha * truth) < -140.0


def test_dnmse_of_zero_estimate_is_positive_infinity():
    assert dnmse([1.0, 2.0], [0.0, 0.0]) == np.inf


def test_vector_metrics_reject_zero_truth():
    with pytest.raises(ValueError):
        nmse([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        dnmse([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        nmse([], [])


def test_dnmse_matches_grid_search_oracle():
    rng = np.random.default_rng(27)
    for _ in range(100):
        truth = rng.standard_normal(12)
        est = rng.standard_normal(12)
        truth /= np.linalg.norm(truth)
        est /= np.linalg.norm(est)
        assert abs(dnmse(truth, est) - debias_grid(truth, est)) < 1e-3


def test_dnmse_frozen_grid_search_case():
    rng = np.random.default_rng(7)
    truth = rng.standard_normal(12)
    est = rng.standard_normal(12)
    truth /= np.linalg.norm(truth)
    est /= np.linalg.norm(est)
    # value frozen from the grid-search oracle (debias_grid)
    assert dnmse(truth, est) == pytest.approx(-0.0417102366797606, abs=1e-3)


# ---------------------------------------------------------------------------
# rank-one product metric
# ---------------------------------------------------------------------------


def test_product_metric_ignores_the_reciprocal_gain_ambiguity():
    rng = np.random.default_rng(28)
    b = rng.standard_normal(4)
    c = rng.standard_normal(6)
    assert nmse_product(b, c, 2.0 * b, c / 2.0) == -np.inf


def test_product_metric_of_zero_estimate_is_zero_db():
    b = np.array([1.0, -2.0])
    c = np.array([0.5, 1.0, 2.0])
    assert nmse_product(b, c, b, np.zeros(3)) == pytest.approx(0.0, abs=1e-12)


def test_product_metric_matches_direct_evaluation():
    rng = np.random.default_rng(29)
    b, c = rng.standard_normal(4), rng.standard_normal(5)
    bh, ch = rng.standard_normal(4), rng.standard_normal(5)
    direct = 10.0 * np.log10(
        np.linalg.norm(np.outer(bh, ch) - np.outer(b, c), "fro") ** 2
        / np.linalg.norm(np.outer(b, c), "fro") ** 2)
    assert nmse_product(b, c, bh, ch) == pytest.approx(direct, abs=1e-12)


def test_product_metric_rejects_zero_truth():
    with pytest.raises(ValueError):
        nmse_product(np.zeros(2), np.ones(3), np.ones(2), np.ones(3))


# ---------------------------------------------------------------------------
# dictionary metric
# ---------------------------------------------------------------------------


def test_dict_metric_single_entry_recovery_of_identity():
    A_hat = np.zeros((2, 2))
    A_hat[0, 0] = 1.0
    value = nmse_dict(np.eye(2), A_hat)
    assert value == pytest.approx(10.0 * np.log10(0.5), abs=1e-12)


def test_dict_metric_is_scale_invariant():
    rng = np.random.default_rng(30)
    A = rng.standard_normal((3, 4))
    assert nmse_dict(A, -8.0 * A) == -np.inf
    assert nmse_dict(A, -7.0 * A) < -280.0  # squared ratio: twice the dB


def test_dict_metric_zero_estimate_gets_zero_gain():
    A = np.eye(2)
    assert nmse_dict(A, np.zeros((2, 2))) == pytest.approx(0.0, abs=1e-12)


def test_dict_metric_matches_grid_search_oracle():
    rng = np.random.default_rng(31)
    for _ in range(100):
        A = rng.standard_normal((4, 3))
        Ah = rng.standard_normal((4, 3))
        A /= np.linalg.norm(A)
        Ah /= np.linalg.norm(Ah)
        # the grid oracle works on norm ratios; the matrix metric is on
        # squared ratios, so the dB values differ by exactly a factor two
        oracle = 2.0 * debias_grid(A.ravel(), Ah.ravel())
        assert abs(nmse_dict(A, Ah) - oracle) < 1e-3


def test_dict_metric_validates_shapes_and_truth():
    with pytest.raises(ValueError):
        nmse_dict(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        nmse_dict(np.zeros((2, 2)), np.eye(2))
