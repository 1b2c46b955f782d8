"""Domain types: dimensions, the affine dictionary map, messages, config,
and the bit-exact state round trip."""

import numpy as np
import pytest

from bgvamp import (AffineDictionary, BernoulliGaussianPrior, Dimensions,
                    GaussianChannel, GaussianMessage, ParameterSet,
                    ProblemModel, SolverConfig, SolverState,
                    evaluate_dictionary, load_state, save_state)


# ---------------------------------------------------------------------------
# Dimensions
# ---------------------------------------------------------------------------


def test_dimensions_accepts_positive_integers():
    d = Dimensions(4, 3, 2, 1)
    assert (d.M, d.N, d.L, d.G) == (4, 3, 2, 1)


def test_dimensions_accepts_numpy_integers():
    d = Dimensions(np.int64(4), np.int32(3), np.int64(2), np.int64(1))
    assert d.M == 4


@pytest.mark.parametrize("bad", [
    dict(M=0, N=3, L=2, G=1),
    dict(M=4, N=-1, L=2, G=1),
    dict(M=4, N=3, L=0, G=1),
    dict(M=4, N=3, L=2, G=0),
    dict(M=4.0, N=3, L=2, G=1),
])
def test_dimensions_rejects_nonpositive_or_noninteger(bad):
    with pytest.raises(ValueError):
        Dimensions(**bad)


# ---------------------------------------------------------------------------
# AffineDictionary
# ---------------------------------------------------------------------------


def test_dictionary_zero_coefficients_give_offset():
    rng = np.random.default_rng(0)
    A0 = rng.standard_normal((3, 2))
    basis = rng.standard_normal((2, 3, 2))
    d = AffineDictionary(A0, basis)
    assert np.array_equal(d.evaluate(np.zeros(2)), A0)


def test_dictionary_scalar_multiple_of_identity():
    d = AffineDictionary(np.zeros((2, 2)), [np.eye(2)])
    assert np.array_equal(d.evaluate([3.0]), 3.0 * np.eye(2))


def test_dictionary_matches_entrywise_loop():
    # independent oracle: accumulate the affine combination entry by entry
    rng = np.random.default_rng(1)
    A0 = rng.standard_normal((4, 3))
    basis = rng.standard_normal((2, 4, 3))
    theta = rng.standard_normal(2)
    expected = np.empty((4, 3))
    for r in range(4):
        for c in range(3):
            acc = A0[r, c]
            for i in range(2):
                acc += theta[i] * basis[i, r, c]
            expected[r, c] = acc
    d = AffineDictionary(A0, basis)
    np.testing.assert_allclose(d.evaluate(theta), expected, rtol=0, atol=1e-15)


def test_dictionary_evaluate_is_affine_in_theta():
    rng = np.random.default_rng(2)
    A0 = rng.standard_normal((5, 4))
    d = AffineDictionary(A0, rng.standard_normal((3, 5, 4)))
    u = rng.standard_normal(3)
    v = rng.standard_normal(3)
    alpha, beta = 0.7, -1.3
    lhs = d.evaluate(alpha * u + beta * v)
    rhs = alpha * d.evaluate(u) + beta * d.evaluate(v) - (alpha + beta - 1) * A0
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_dictionary_promotes_single_matrix_basis():
    d = AffineDictionary(np.zeros((2, 2)), np.eye(2))
    assert d.n_params == 1
    assert d.basis.shape == (1, 2, 2)


def test_dictionary_shape_and_theta_validation():
    with pytest.raises(ValueError):
        AffineDictionary(np.zeros((2, 2)), np.zeros((1, 3, 2)))
    with pytest.raises(ValueError):
        AffineDictionary(np.zeros(3), np.zeros((1, 3, 2)))
    d = AffineDictionary(np.zeros((2, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        d.evaluate([1.0])
    assert d.shape == (2, 2)


def test_evaluate_dictionary_wrapper():
    d = AffineDictionary(np.zeros((2, 2)), [np.eye(2)])
    assert np.array_equal(evaluate_dictionary(d, [2.0]), 2.0 * np.eye(2))


# ---------------------------------------------------------------------------
# GaussianMessage / ParameterSet / ProblemModel
# ---------------------------------------------------------------------------


def test_message_scalar_and_vector_variance():
    m = GaussianMessage(np.zeros((3, 2)), 1.5)
    assert m.variance == 1.5
    mv = GaussianMessage(np.zeros((3, 2)), np.array([1.0, 2.0]))
    assert mv.variance.shape == (2,)


@pytest.mark.parametrize("var", [0.0, -1.0, np.inf, np.nan,
                                 np.array([1.0, 0.0]),
                                 np.array([1.0, 2.0, 3.0])])
def test_message_rejects_bad_variance(var):
    with pytest.raises(ValueError):
        GaussianMessage(np.zeros((3, 2)), var)


def test_parameter_set_validation_and_copy():
    p = ParameterSet(np.array([1.0, 2.0]), BernoulliGaussianPrior(0.5), 2.0)
    q = p.copy()
    q.theta_A[0] = 99.0
    assert p.theta_A[0] == 1.0
    with pytest.raises(ValueError):
        ParameterSet(np.zeros((2, 2)), BernoulliGaussianPrior(0.5), 1.0)
    with pytest.raises(ValueError):
        ParameterSet(np.zeros(2), BernoulliGaussianPrior(0.5), 0.0)


def test_problem_model_shape_checks():
    dims = Dimensions(3, 2, 1, 1)
    good = AffineDictionary(np.zeros((3, 2)), np.ones((1, 3, 2)))
    prior = BernoulliGaussianPrior(0.5)
    channel = GaussianChannel(1.0)
    ProblemModel(dims, good, prior, channel)
    with pytest.raises(ValueError):
        ProblemModel(dims, AffineDictionary(np.zeros((2, 2)),
                                            np.ones((1, 2, 2))),
                     prior, channel)
    with pytest.raises(ValueError):
        ProblemModel(dims, AffineDictionary(np.zeros((3, 2)),
                                            np.ones((2, 3, 2))),
                     prior, channel)


# ---------------------------------------------------------------------------
# SolverConfig
# ---------------------------------------------------------------------------


def test_config_defaults():
    cfg = SolverConfig()
    assert cfg.T_outer == 50
    assert cfg.T_inner1 == 1
    assert cfg.T_inner2 == 2
    assert cfg.damping == 0.8
    assert cfg.gamma_min == 1e-8
    assert cfg.gamma_max == 1e12
    assert cfg.z_ext_var_cap is None


@pytest.mark.parametrize("kwargs", [
    dict(T_outer=-1),
    dict(T_inner1=0),
    dict(T_inner2=0),
    dict(damping=0.0),
    dict(damping=1.5),
    dict(gamma_min=0.0),
    dict(gamma_min=1e-2, gamma_max=1e-3),
    dict(init_gamma2=0.0),
    dict(z_ext_var_cap=0.0),
    dict(z_ext_var_cap=-1.0),
    dict(gaussian_fast_path=True, learn_theta_Y=True),
])
def test_config_rejects_invalid_settings(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_config_fast_path_allowed_without_channel_learning():
    cfg = SolverConfig(gaussian_fast_path=True, learn_theta_Y=False)
    assert cfg.gaussian_fast_path


def test_config_coerces_init_theta_a_to_array():
    cfg = SolverConfig(init_theta_A=[1, 2, 3])
    assert cfg.init_theta_A.dtype == float
    assert cfg.init_theta_A.shape == (3,)


# ---------------------------------------------------------------------------
# SolverState serialization
# ---------------------------------------------------------------------------


def _make_state(z_variance):
    rng = np.random.default_rng(3)
    return SolverState(
        zA_ext=GaussianMessage(rng.standard_normal((4, 2)), z_variance),
        zB_ext=GaussianMessage(rng.standard_normal((4, 2)), 0.25),
        r1=rng.standard_normal((3, 2)), gamma1=np.array([1.0, np.pi]),
        r2=rng.standard_normal((3, 2)), gamma2=np.array([0.5, 1e-7]),
        x1_hat=rng.standard_normal((3, 2)), eta1=np.array([2.0, 3.0]),
        x2_hat=rng.standard_normal((3, 2)), eta2=np.array([4.0, 5.0]),
        gamma_w_tilde=1.0 / 3.0,
        params=ParameterSet(rng.standard_normal(2),
                            BernoulliGaussianPrior(0.2, -0.1, 1.7),
                            7.0 / 11.0),
        iteration=17, nan_clip_count=3,
    )


@pytest.mark.parametrize("z_variance", [np.e, np.array([0.1, 0.2])])
def test_state_round_trip_is_bit_exact(tmp_path, z_variance):
    state = _make_state(z_variance)
    path = tmp_path / "state.npz"
    save_state(state, path)
    loaded = load_state(path)
    for name in ("r1", "gamma1", "r2", "gamma2", "x1_hat", "eta1",
                 "x2_hat", "eta2"):
        assert np.array_equal(getattr(loaded, name), getattr(state, name))
    assert np.array_equal(loaded.zA_ext.means, state.zA_ext.means)
    assert np.array_equal(np.asarray(loaded.zA_ext.variance),
                          np.asarray(state.zA_ext.variance))
    assert np.array_equal(loaded.zB_ext.means, state.zB_ext.means)
    assert loaded.zB_ext.variance == state.zB_ext.variance
    assert loaded.gamma_w_tilde == state.gamma_w_tilde
    assert np.array_equal(loaded.params.theta_A, state.params.theta_A)
    assert loaded.params.theta_X == state.params.theta_X
    assert loaded.params.theta_Y == state.params.theta_Y
    assert loaded.iteration == state.iteration
    assert loaded.nan_clip_count == state.nan_clip_count


def test_state_copy_is_deep():
    state = _make_state(1.0)
    dup = state.copy()
    dup.r1[0, 0] = 123.0
    dup.params.theta_A[0] = 123.0
    dup.zA_ext.means[0, 0] = 123.0
    assert state.r1[0, 0] != 123.0
    assert state.params.theta_A[0] != 123.0
    assert state.zA_ext.means[0, 0] != 123.0
