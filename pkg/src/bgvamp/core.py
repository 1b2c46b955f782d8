"""Bilinear linear core: LMMSE estimation of X, EM for the dictionary
parameters and the effective noise precision, and the extrinsic message
algebra that couples the core to the sparsity denoiser and to the output
channel.

All per-column posterior covariances share the eigenbasis of ``A^T A``:
with ``A^T A = V diag(d) V^T`` the covariance of column l is
``V diag(1 / (gamma_w_tilde * d + gamma2[l])) V^T``, so one
eigendecomposition per dictionary evaluation serves every column, every
trace, and the Z-side posterior variance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PseudoObservation:
    """Extrinsic channel message recast as an AWGN observation of Z.

    ``y_tilde`` is M x L and ``gamma_w_tilde`` is the scalar precision of
    the equivalent noise.
    """

    y_tilde: np.ndarray
    gamma_w_tilde: float

    def __post_init__(self):
        if not (self.gamma_w_tilde > 0.0 and np.isfinite(self.gamma_w_tilde)):
            raise ValueError("gamma_w_tilde must be a positive finite precision")

    def with_precision(self, gamma_w_tilde: float) -> "PseudoObservation":
        return PseudoObservation(self.y_tilde, float(gamma_w_tilde))


@dataclass(frozen=True, eq=False)
class LmmsePosterior:
    """LMMSE posterior over X plus the spectral data needed to reuse it.

    ``xi_traces[l]`` is the trace of the column-l posterior covariance and
    ``xi_sum`` is the sum of the covariances over columns (the N x N matrix
    that the EM updates consume).  ``eigvecs``/``eigvals`` cache the
    eigendecomposition of ``A^T A`` at the operating point.
    """

    x2_hat: np.ndarray
    eta2: np.ndarray
    xi_traces: np.ndarray
    xi_sum: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    gamma2: np.ndarray
    gamma_w_tilde: float

    def covariance(self, l: int) -> np.ndarray:
        """Dense posterior covariance of column ``l`` (N x N)."""
        inv = 1.0 / (self.gamma_w_tilde * self.eigvals + self.gamma2[l])
        return (self.eigvecs * inv) @ self.eigvecs.T


def lmmse(A: np.ndarray, pseudo: PseudoObservation, r2: np.ndarray,
          gamma2: np.ndarray, gram: np.ndarray | None = None) -> LmmsePosterior:
    """Columnwise Gaussian posterior of X given the pseudo observation.

    Column l solves ``(gamma_w_tilde A^T A + gamma2[l] I) x = gamma_w_tilde
    A^T y_tilde_l + gamma2[l] r2_l``.  Pass ``gram`` to reuse a precomputed
    ``A^T A``.

    Parameters
    ----------
    A : ndarray
        Dictionary at the current parameter estimate, M x N.
    pseudo : PseudoObservation
        Equivalent AWGN observation of Z = A X.
    r2, gamma2 : ndarray
        Incoming message: N x L means and length-L positive precisions.
    gram : ndarray, optional
        Precomputed ``A.T @ A``.

    Returns
    -------
    LmmsePosterior
    """
    N = A.shape[1]
    gamma2 = np.asarray(gamma2, dtype=float)
    if np.any(gamma2 <= 0.0) or not np.all(np.isfinite(gamma2)):
        raise ValueError("gamma2 must be positive and finite")
    if gram is None:
        gram = A.T @ A
    eigvals, eigvecs = np.linalg.eigh(gram)
    eigvals = np.maximum(eigvals, 0.0)

    gw = pseudo.gamma_w_tilde
    rhs = gw * (A.T @ pseudo.y_tilde) + r2 * gamma2[None, :]
    inv_spectrum = 1.0 / (gw * eigvals[:, None] + gamma2[None, :])
    x2_hat = eigvecs @ (inv_spectrum * (eigvecs.T @ rhs))

    xi_traces = inv_spectrum.sum(axis=0)
    eta2 = N / xi_traces
    xi_sum = (eigvecs * inv_spectrum.sum(axis=1)) @ eigvecs.T
    return LmmsePosterior(x2_hat=x2_hat, eta2=eta2, xi_traces=xi_traces,
                          xi_sum=xi_sum, eigvecs=eigvecs, eigvals=eigvals,
                          gamma2=gamma2, gamma_w_tilde=gw)


def em_update_theta_A(dictionary, posterior: LmmsePosterior,
                      pseudo: PseudoObservation) -> np.ndarray:
    """Maximize the expected complete-data likelihood over the dictionary
    parameters.

    With ``S = sum_l Cov(x_l) + X_hat X_hat^T`` the stationarity condition
    is linear, ``H theta = beta`` with ``H_ij = tr(A_j^T A_i S)`` and
    ``beta_i = tr(Y_tilde^T A_i X_hat) - tr(A0^T A_i S)``.  H is symmetric
    positive semidefinite; a tiny ridge covers the rank-deficient case.
    """
    basis = dictionary.basis
    x_hat = posterior.x2_hat
    S = posterior.xi_sum + x_hat @ x_hat.T

    # T[i] = A_i S ; H_ij = <A_i S, A_j> ; beta from the data and offset terms.
    T = np.einsum("imn,nk->imk", basis, S)
    H = np.einsum("imk,jmk->ij", T, basis)
    AX = np.einsum("imn,nl->iml", basis, x_hat)
    beta = np.einsum("ml,iml->i", pseudo.y_tilde, AX)
    beta -= np.einsum("mn,imn->i", dictionary.A0, T)

    try:
        theta = np.linalg.solve(H, beta)
        if not np.all(np.isfinite(theta)):
            raise np.linalg.LinAlgError("non-finite solution")
    except np.linalg.LinAlgError:
        ridge = 1e-10 * max(np.trace(H) / H.shape[0], 1.0)
        warnings.warn("dictionary-parameter system is singular; adding ridge",
                      RuntimeWarning)
        theta = np.linalg.solve(H + ridge * np.eye(H.shape[0]), beta)
    return theta


def em_update_gamma_w(A: np.ndarray, posterior: LmmsePosterior,
                      pseudo: PseudoObservation,
                      clip: tuple[float, float] | None = None) -> float:
    """Maximize the expected likelihood over the equivalent noise precision.

    ``1/gamma = (||Y_tilde - A X_hat||_F^2 + tr(A Xi A^T)) / (M L)`` where
    ``Xi`` sums the per-column posterior covariances.
    """
    M, L = pseudo.y_tilde.shape
    residual = pseudo.y_tilde - A @ posterior.x2_hat
    trace_term = float(np.sum((A @ posterior.xi_sum) * A))
    inv_gamma = (float(np.sum(residual * residual)) + trace_term) / (M * L)
    with np.errstate(divide="ignore"):
        gamma = 1.0 / inv_gamma if inv_gamma > 0.0 else np.inf
    if clip is not None:
        gmin, gmax = clip
        if not np.isfinite(gamma):
            gamma = gmax
        gamma = float(np.clip(gamma, gmin, gmax))
    return float(gamma)


def _extrinsic_columns(post_mean: np.ndarray, post_prec: np.ndarray,
                       prior_mean: np.ndarray, prior_prec: np.ndarray,
                       clip: tuple[float, float] | None):
    # Precision-domain Gaussian division, columnwise.  The mean uses the
    # clipped precision so the emitted message is self-consistent.
    raw = post_prec - prior_prec
    ok = np.isfinite(raw) & (raw > 0.0)
    prec = raw
    if clip is not None:
        gmin, gmax = clip
        prec = np.where(np.isnan(prec), gmin, prec)
        prec = np.clip(prec, gmin, gmax)
    with np.errstate(divide="ignore", invalid="ignore"):
        means = (post_mean * post_prec[None, :]
                 - prior_mean * prior_prec[None, :]) / prec[None, :]
    return means, prec, ok


def extrinsic_x_forward(posterior: LmmsePosterior, r2: np.ndarray,
                        gamma2: np.ndarray,
                        clip: tuple[float, float] | None = None):
    """Message from the linear core toward the denoiser: ``(r1, gamma1)``.

    ``gamma1 = eta2 - gamma2`` and ``r1 = (eta2 x2_hat - gamma2 r2) /
    gamma1``, columnwise.  Returns ``(r1, gamma1, ok)`` where ``ok`` flags
    columns whose raw extrinsic precision was positive before clipping.
    """
    return _extrinsic_columns(posterior.x2_hat, posterior.eta2, r2,
                              np.asarray(gamma2, dtype=float), clip)


def extrinsic_x_backward(x1_hat: np.ndarray, eta1: np.ndarray,
                         r1: np.ndarray, gamma1: np.ndarray,
                         clip: tuple[float, float] | None = None):
    """Message from the denoiser back to the linear core: ``(r2, gamma2)``."""
    return _extrinsic_columns(x1_hat, np.asarray(eta1, dtype=float), r1,
                              np.asarray(gamma1, dtype=float), clip)


def z_posterior(A: np.ndarray, pseudo: PseudoObservation, r2: np.ndarray,
                gamma2: np.ndarray, gram: np.ndarray | None = None):
    """Posterior over Z = A X under the pseudo observation.

    Returns ``(z_post, v_columns, v_post)``: M x L means, per-column
    variances ``tr(A Cov(x_l) A^T) / M`` and their average.  Uses the
    identity ``tr(A V f(d) V^T A^T) = sum_k d_k f(d_k)``.
    """
    posterior = lmmse(A, pseudo, r2, gamma2, gram=gram)
    z_post = A @ posterior.x2_hat
    d = posterior.eigvals
    gw = pseudo.gamma_w_tilde
    traces = (d[:, None] / (gw * d[:, None] + posterior.gamma2[None, :])).sum(axis=0)
    v_columns = traces / A.shape[0]
    return z_post, v_columns, float(v_columns.mean())


def extrinsic_z(z_post: np.ndarray, v_post: float, zB_ext: np.ndarray,
                vB_ext: float, clip: tuple[float, float] | None = None):
    """Extrinsic Z message from the linear core toward the output channel.

    Divides the scalar-variance Z posterior by the incoming channel message
    ``(zB_ext, vB_ext)``: the extrinsic precision is ``1/v_post - 1/vB_ext``
    and the means follow the matching natural-parameter difference.  Note
    the divisor is the channel's extrinsic message as received, not any
    later re-estimate of the pseudo-noise precision.  Returns ``(means,
    variance, ok)``.
    """
    prec_B = 1.0 / vB_ext
    raw = 1.0 / v_post - prec_B
    ok = bool(np.isfinite(raw) and raw > 0.0)
    prec = raw
    if clip is not None:
        gmin, gmax = clip
        if np.isnan(prec):
            prec = gmin
        prec = float(np.clip(prec, gmin, gmax))
    with np.errstate(divide="ignore", invalid="ignore"):
        variance = 1.0 / prec
        means = (z_post / v_post - prec_B * zB_ext) * variance
    return means, float(variance), ok
