"""Linear core: LMMSE, the two EM updates, and the extrinsic message algebra."""

import numpy as np
import pytest

from bgvamp import (AffineDictionary, LmmsePosterior, PseudoObservation,
                    em_update_gamma_w, em_update_theta_A, extrinsic_x_backward,
                    extrinsic_x_forward, extrinsic_z, lmmse, z_posterior)

from oracles import (dense_lmmse, fd_gradient, mc_residual_expectation,
                     surrogate_dictionary_objective)


def _random_problem(rng, M=8, N=6, L=3, G=2):
    A0 = rng.standard_normal((M, N))
    basis = rng.standard_normal((G, M, N))
    dictionary = AffineDictionary(A0, basis)
    theta = rng.standard_normal(G)
    A = dictionary.evaluate(theta)
    pseudo = PseudoObservation(rng.standard_normal((M, L)),
                               float(rng.uniform(0.5, 2.0)))
    r2 = rng.standard_normal((N, L))
    gamma2 = rng.uniform(0.2, 3.0, size=L)
    return dictionary, theta, A, pseudo, r2, gamma2


# ---------------------------------------------------------------------------
# pseudo observation
# ---------------------------------------------------------------------------


def test_pseudo_observation_requires_positive_precision():
    with pytest.raises(ValueError):
        PseudoObservation(np.zeros((2, 1)), 0.0)
    with pytest.raises(ValueError):
        PseudoObservation(np.zeros((2, 1)), np.inf)
    p = PseudoObservation(np.zeros((2, 1)), 1.0)
    assert p.with_precision(2.0).gamma_w_tilde == 2.0


# ---------------------------------------------------------------------------
# LMMSE
# ---------------------------------------------------------------------------


def test_lmmse_scalar_case():
    post = lmmse(np.array([[1.0]]),
                 PseudoObservation(np.array([[2.0]]), 1.0),
                 np.array([[0.0]]), np.array([1.0]))
    assert post.x2_hat[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert post.xi_traces[0] == pytest.approx(0.5, abs=1e-15)
    assert post.eta2[0] == pytest.approx(2.0, abs=1e-15)


def test_lmmse_with_zero_dictionary_returns_the_cavity():
    rng = np.random.default_rng(14)
    r2 = rng.standard_normal((4, 2))
    gamma2 = np.array([0.5, 2.0])
    post = lmmse(np.zeros((3, 4)), PseudoObservation(np.zeros((3, 2)), 1.0),
                 r2, gamma2)
    np.testing.assert_allclose(post.x2_hat, r2, atol=1e-12)
    np.testing.assert_allclose(post.eta2, gamma2, rtol=1e-12)
    for l in range(2):
        np.testing.assert_allclose(post.covariance(l),
                                   np.eye(4) / gamma2[l], atol=1e-12)


def test_lmmse_matches_dense_solve_oracle():
    rng = np.random.default_rng(15)
    _, _, A, pseudo, r2, gamma2 = _random_problem(rng)
    post = lmmse(A, pseudo, r2, gamma2)
    x_direct, covs = dense_lmmse(A, pseudo.y_tilde, pseudo.gamma_w_tilde,
                                 r2, gamma2)
    np.testing.assert_allclose(post.x2_hat, x_direct, atol=1e-10)
    for l, cov in enumerate(covs):
        np.testing.assert_allclose(post.covariance(l), cov, atol=1e-10)
        assert post.xi_traces[l] == pytest.approx(np.trace(cov), abs=1e-10)
    np.testing.assert_allclose(post.xi_sum, sum(covs), atol=1e-10)
    np.testing.assert_allclose(post.eta2, 6 / np.array(
        [np.trace(c) for c in covs]), rtol=1e-10)


def test_lmmse_covariance_inverts_the_precision_matrix():
    rng = np.random.default_rng(16)
    _, _, A, pseudo, r2, gamma2 = _random_problem(rng, M=10, N=7, L=4)
    post = lmmse(A, pseudo, r2, gamma2)
    gram = A.T @ A
    for l in range(4):
        prec = pseudo.gamma_w_tilde * gram + gamma2[l] * np.eye(7)
        np.testing.assert_allclose(post.covariance(l) @ prec, np.eye(7),
                                   atol=1e-10)


def test_lmmse_accepts_precomputed_gram():
    rng = np.random.default_rng(17)
    _, _, A, pseudo, r2, gamma2 = _random_problem(rng)
    a = lmmse(A, pseudo, r2, gamma2)
    b = lmmse(A, pseudo, r2, gamma2, gram=A.T @ A)
    np.testing.assert_array_equal(a.x2_hat, b.x2_hat)


def test_lmmse_validates_gamma2():
    with pytest.raises(ValueError):
        lmmse(np.eye(2), PseudoObservation(np.zeros((2, 1)), 1.0),
              np.zeros((2, 1)), np.array([0.0]))
    with pytest.raises(ValueError):
        lmmse(np.eye(2), PseudoObservation(np.zeros((2, 1)), 1.0),
              np.zeros((2, 1)), np.array([np.inf]))


# ---------------------------------------------------------------------------
# dictionary-parameter EM
# ---------------------------------------------------------------------------


def _posterior_stub(x_hat, xi_sum, gamma2=None):
    N = x_hat.shape[0]
    L = x_hat.shape[1]
    if gamma2 is None:
        gamma2 = np.ones(L)
    return LmmsePosterior(x2_hat=x_hat, eta2=np.ones(L),
                          xi_traces=np.full(L, np.trace(xi_sum) / L),
                          xi_sum=xi_sum, eigvecs=np.eye(N),
                          eigvals=np.zeros(N), gamma2=gamma2,
                          gamma_w_tilde=1.0)


def test_dictionary_em_scalar_normal_equation():
    dictionary = AffineDictionary(np.zeros((1, 1)), np.ones((1, 1, 1)))
    post = _posterior_stub(np.array([[2.0]]), np.array([[1.0]]))
    pseudo = PseudoObservation(np.array([[6.0]]), 1.0)
    theta = em_update_theta_A(dictionary, post, pseudo)
    # H = 1 * (1 + 4) = 5, beta = 6 * 2 = 12
    assert theta[0] == pytest.approx(2.4, rel=1e-15)


def test_dictionary_em_interpolates_noiseless_data_exactly():
    rng = np.random.default_rng(18)
    dictionary, theta_true, A, _, _, _ = _random_problem(rng, M=9, N=5,
                                                         L=4, G=3)
    X = rng.standard_normal((5, 4))
    pseudo = PseudoObservation(A @ X, 1.0)
    post = _posterior_stub(X, np.zeros((5, 5)))
    theta = em_update_theta_A(dictionary, post, pseudo)
    np.testing.assert_allclose(theta, theta_true, atol=1e-8)


def test_dictionary_em_zeroes_the_surrogate_gradient():
    rng = np.random.default_rng(19)
    for _ in range(5):
        dictionary, _, A, pseudo, r2, gamma2 = _random_problem(
            rng, M=7, N=5, L=3, G=3)
        post = lmmse(A, pseudo, r2, gamma2)
        covs = [post.covariance(l) for l in range(3)]
        theta = em_update_theta_A(dictionary, post, pseudo)

        def objective(th):
            return surrogate_dictionary_objective(
                dictionary, th, pseudo.y_tilde, post.x2_hat, covs)

        grad = fd_gradient(objective, theta, h=1e-6)
        assert np.max(np.abs(grad)) < 1e-6


def test_dictionary_em_regularizes_singular_systems():
    # two identical basis matrices make H rank deficient
    basis = np.stack([np.ones((2, 2)), np.ones((2, 2))])
    dictionary = AffineDictionary(np.zeros((2, 2)), basis)
    post = _posterior_stub(np.ones((2, 1)), np.eye(2))
    pseudo = PseudoObservation(np.ones((2, 1)), 1.0)
    with pytest.warns(RuntimeWarning):
        theta = em_update_theta_A(dictionary, post, pseudo)
    assert np.all(np.isfinite(theta))


# ---------------------------------------------------------------------------
# pseudo-noise EM
# ---------------------------------------------------------------------------


def test_noise_em_combines_residual_and_trace():
    post = _posterior_stub(np.array([[0.0]]), np.array([[3.0]]))
    pseudo = PseudoObservation(np.array([[1.0]]), 1.0)
    gamma = em_update_gamma_w(np.array([[1.0]]), post, pseudo)
    assert gamma == pytest.approx(0.25, rel=1e-15)


def test_noise_em_clips_a_perfect_fit_to_gamma_max():
    post = _posterior_stub(np.array([[1.0]]), np.zeros((1, 1)))
    pseudo = PseudoObservation(np.array([[1.0]]), 1.0)
    gamma = em_update_gamma_w(np.array([[1.0]]), post, pseudo,
                              clip=(1e-8, 1e12))
    assert gamma == 1e12


def test_noise_em_is_positive_before_clipping():
    rng = np.random.default_rng(20)
    _, _, A, pseudo, r2, gamma2 = _random_problem(rng)
    post = lmmse(A, pseudo, r2, gamma2)
    assert em_update_gamma_w(A, post, pseudo) > 0.0


def test_noise_em_matches_monte_carlo_expectation():
    rng = np.random.default_rng(21)
    _, _, A, pseudo, r2, gamma2 = _random_problem(rng, M=8, N=6, L=2)
    post = lmmse(A, pseudo, r2, gamma2)
    covs = [post.covariance(l) for l in range(2)]
    gamma = em_update_gamma_w(A, post, pseudo)
    mc = mc_residual_expectation(A, pseudo.y_tilde, post.x2_hat, covs,
                                 n_samples=200_000,
                                 rng=np.random.default_rng(22))
    assert abs(1.0 / gamma - mc) < 0.01 * mc


# ---------------------------------------------------------------------------
# extrinsic x-messages
# ---------------------------------------------------------------------------


def test_forward_extrinsic_subtracts_the_cavity():
    post = LmmsePosterior(x2_hat=np.array([[1.0]]), eta2=np.array([2.0]),
                          xi_traces=np.array([0.5]), xi_sum=np.zeros((1, 1)),
                          eigvecs=np.eye(1), eigvals=np.zeros(1),
                          gamma2=np.array([1.0]), gamma_w_tilde=1.0)
    r1, gamma1, ok = extrinsic_x_forward(post, np.array([[0.0]]),
                                         np.array([1.0]))
    assert gamma1[0] == pytest.approx(1.0, abs=1e-15)
    assert r1[0, 0] == pytest.approx(2.0, abs=1e-15)
    assert ok.all()


def test_forward_extrinsic_flags_noninformative_columns():
    post = LmmsePosterior(x2_hat=np.array([[1.0]]), eta2=np.array([1.0]),
                          xi_traces=np.array([1.0]), xi_sum=np.zeros((1, 1)),
                          eigvecs=np.eye(1), eigvals=np.zeros(1),
                          gamma2=np.array([1.0]), gamma_w_tilde=1.0)
    _, gamma1, ok = extrinsic_x_forward(post, np.array([[0.0]]),
                                        np.array([1.0]), clip=(1e-8, 1e12))
    assert not ok.any()
    assert gamma1[0] == 1e-8


def test_x_extrinsic_recombination_identities():
    rng = np.random.default_rng(23)
    for _ in range(50):
        N, L = 4, 3
        eta = rng.uniform(1.1, 5.0, size=L)
        gamma = rng.uniform(0.1, 1.0, size=L)
        x_hat = rng.standard_normal((N, L))
        r = rng.standard_normal((N, L))
        post = LmmsePosterior(x2_hat=x_hat, eta2=eta,
                              xi_traces=N / eta, xi_sum=np.zeros((N, N)),
                              eigvecs=np.eye(N), eigvals=np.zeros(N),
                              gamma2=gamma, gamma_w_tilde=1.0)
        r1, gamma1, ok = extrinsic_x_forward(post, r, gamma)
        assert ok.all()
        # recombining the extrinsic message with the cavity recovers the
        # posterior moments
        prec = gamma1 + gamma
        mean = (r1 * gamma1[None, :] + r * gamma[None, :]) / prec[None, :]
        np.testing.assert_allclose(prec, eta, rtol=1e-12)
        np.testing.assert_allclose(mean, x_hat, atol=1e-10)

        r2b, gamma2b, ok2 = extrinsic_x_backward(x_hat, eta, r, gamma)
        np.testing.assert_array_equal(r2b, r1)
        np.testing.assert_array_equal(gamma2b, gamma1)
        assert ok2.all()


# ---------------------------------------------------------------------------
# measurement-space posterior and extrinsic
# ---------------------------------------------------------------------------


def test_z_posterior_scalar_case():
    z, v_cols, v = z_posterior(np.array([[1.0]]),
                               PseudoObservation(np.array([[2.0]]), 1.0),
                               np.array([[0.0]]), np.array([1.0]))
    assert z[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert v == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(v_cols, [0.5])


def test_z_posterior_with_zero_dictionary_is_degenerate():
    z, v_cols, v = z_posterior(np.zeros((3, 2)),
                               PseudoObservation(np.zeros((3, 1)), 1.0),
                               np.ones((2, 1)), np.array([1.0]))
    np.testing.assert_array_equal(z, np.zeros((3, 1)))
    assert v == 0.0


def test_z_posterior_is_the_pushforward_of_lmmse():
    rng = np.random.default_rng(24)
    _, _, A, pseudo, r2, gamma2 = _random_problem(rng)
    z, v_cols, v = z_posterior(A, pseudo, r2, gamma2)
    post = lmmse(A, pseudo, r2, gamma2)
    np.testing.assert_allclose(z, A @ post.x2_hat, atol=1e-12)
    for l in range(3):
        expected = np.trace(A @ post.covariance(l) @ A.T) / A.shape[0]
        assert v_cols[l] == pytest.approx(expected, abs=1e-12)
    assert v == pytest.approx(v_cols.mean(), abs=1e-15)


def test_z_extrinsic_algebra_and_recombination():
    mean, var, ok = extrinsic_z(np.array([[1.0]]), 0.5,
                                np.array([[0.0]]), 1.0)
    assert var == pytest.approx(1.0, abs=1e-15)
    assert mean[0, 0] == pytest.approx(2.0, abs=1e-15)
    assert ok

    rng = np.random.default_rng(25)
    for _ in range(50):
        vB = float(rng.uniform(0.5, 2.0))
        v_post = float(rng.uniform(0.05, 0.95)) * vB
        z_post = rng.standard_normal((3, 2))
        zB = rng.standard_normal((3, 2))
        means, var, ok = extrinsic_z(z_post, v_post, zB, vB)
        assert ok
        prec = 1.0 / var + 1.0 / vB
        mean = (means / var + zB / vB) / prec
        assert abs(1.0 / prec - v_post) < 1e-12
        np.testing.assert_allclose(mean, z_post, atol=1e-10)


def test_z_extrinsic_flags_and_clips_noninformative_posteriors():
    means, var, ok = extrinsic_z(np.zeros((2, 1)), 1.0, np.zeros((2, 1)), 1.0,
                                 clip=(1e-8, 1e12))
    assert not ok
    assert var == 1e8
    assert np.all(np.isfinite(means))
