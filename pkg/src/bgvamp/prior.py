"""Bernoulli-Gaussian signal prior: MMSE denoiser and EM updates.

The prior on each entry is ``(1 - rho) * delta(x) + rho * N(x; mu, psi)``.
Under a Gaussian pseudo-measurement ``r = x + e`` with ``e ~ N(0, 1/gamma1)``
the posterior is an exact two-component mixture, so the denoiser and all EM
quantities are closed form.  Responsibilities are computed in the log
domain to stay exact when one component dominates by hundreds of orders of
magnitude.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .exceptions import NumericsError


@dataclass(frozen=True)
class BernoulliGaussianPrior:
    """Spike-and-slab prior with activity rho, slab mean mu, slab variance psi."""

    rho: float
    mu: float = 0.0
    psi: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise ValueError("rho must lie in (0, 1]")
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (self.psi > 0.0 and np.isfinite(self.psi)):
            raise ValueError("psi must be positive and finite")


@dataclass
class DenoiseResult:
    """Componentwise posterior summaries produced by :func:`denoise`.

    ``x1_hat`` is the posterior mean, ``eta1`` the per-column reciprocal of
    the average posterior variance.  ``responsibility`` is the posterior
    probability that an entry is active; ``active_mean`` and ``active_var``
    are the moments of the active (slab) component, the latter one scalar
    per column.
    """

    x1_hat: np.ndarray
    eta1: np.ndarray
    responsibility: np.ndarray
    active_mean: np.ndarray
    active_var: np.ndarray


def denoise(prior: BernoulliGaussianPrior, r1, gamma1) -> DenoiseResult:
    """MMSE denoiser for the Bernoulli-Gaussian prior.

    Parameters
    ----------
    prior:
        The spike-and-slab prior parameters.
    r1:
        N x L matrix of pseudo-measurements.
    gamma1:
        Length-L vector of pseudo-measurement precisions, strictly positive.
    """
    r = np.asarray(r1, dtype=float)
    g = np.atleast_1d(np.asarray(gamma1, dtype=float))
    if r.ndim != 2 or g.shape != (r.shape[1],):
        raise ValueError("r1 must be N x L and gamma1 length L")
    if not np.all(np.isfinite(r)):
        raise NumericsError("non-finite pseudo-measurements")
    if not np.all((g > 0.0) & np.isfinite(g)):
        raise ValueError("gamma1 must be positive and finite")

    tau = 1.0 / g                      # pseudo-noise variance per column
    v_act = 1.0 / (g + 1.0 / prior.psi)
    m_act = v_act * (g * r + prior.mu / prior.psi)

    if prior.rho >= 1.0:
        pi = np.ones_like(r)
    else:
        # log N(r; mu, psi + tau) - log N(r; 0, tau), columnwise tau
        s_act = prior.psi + tau
        loglr = 0.5 * (np.log(tau) - np.log(s_act)) \
            + 0.5 * (np.square(r) / tau - np.square(r - prior.mu) / s_act)
        logit = math.log(prior.rho) - math.log1p(-prior.rho) + loglr
        pi = expit(logit)

    x1_hat = pi * m_act
    post_var = pi * v_act + pi * (1.0 - pi) * np.square(m_act)
    eta1 = 1.0 / post_var.mean(axis=0)
    if not (np.all(np.isfinite(x1_hat)) and np.all(np.isfinite(eta1))):
        raise NumericsError("denoiser produced non-finite moments")
    return DenoiseResult(x1_hat=x1_hat, eta1=eta1, responsibility=pi,
                         active_mean=m_act, active_var=v_act)


def em_update_theta_X(prior: BernoulliGaussianPrior, den: DenoiseResult,
                      learn_rho=True, learn_mu=False, learn_psi=True):
    """EM re-estimate of the prior from the denoiser posteriors.

    Standard spike-and-slab EM under Gaussian pseudo-observations: rho
    becomes the mean activity responsibility, mu the responsibility-weighted
    active mean, psi the responsibility-weighted second moment about the
    (new) mu.  If every responsibility is exactly zero the update is
    undefined; the previous parameters are kept and a warning is emitted.
    """
    pi = den.responsibility
    total = float(pi.sum())
    if total == 0.0:
        warnings.warn("all activity responsibilities are zero; keeping prior",
                      RuntimeWarning, stacklevel=2)
        return prior

    rho = float(np.clip(pi.mean(), 1e-12, 1.0)) if learn_rho else prior.rho
    mu = float((pi * den.active_mean).sum() / total) if learn_mu else prior.mu
    if learn_psi:
        spread = den.active_var[None, :] + np.square(den.active_mean - mu)
        psi = float(max((pi * spread).sum() / total, 1e-12))
    else:
        psi = prior.psi
    return replace(prior, rho=rho, mu=mu, psi=psi)


def em_update_gamma1(x1_hat, eta1, r1) -> np.ndarray:
    """EM re-estimate of the per-column pseudo-measurement precisions.

    ``gamma1[l] = 1 / (mean((x1_hat[:, l] - r1[:, l])**2) + 1/eta1[l])``.
    """
    x = np.asarray(x1_hat, dtype=float)
    r = np.asarray(r1, dtype=float)
    inv = np.mean(np.square(x - r), axis=0) + 1.0 / np.asarray(eta1, dtype=float)
    with np.errstate(divide="ignore"):
        return 1.0 / inv
