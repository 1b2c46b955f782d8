"""Componentwise measurement channels and their posterior-moment routines.

Two channels are implemented.  The Gaussian channel observes ``y = z + w``
with ``w ~ N(0, 1/gamma_w)``.  The quantized channel observes the index of
the uniform quantizer bin that ``z + w`` falls into, so its likelihood for
a bin ``[lo, hi)`` is ``Phi((hi - z) * sqrt(gamma_w)) - Phi((lo - z) *
sqrt(gamma_w))``.

Given a Gaussian prior ``z ~ N(m, v)`` both posteriors are available in
closed form; the quantized one reduces to truncated-Gaussian moments of the
auxiliary variable ``x = z + w ~ N(m, v + 1/gamma_w)`` restricted to the
bin.  The truncated moments are evaluated through the scaled complementary
error function so that bins many standard deviations out in the tail still
return finite, accurate moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erf, erfcx

from .exceptions import NumericsError

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# uniform quantizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Quantizer:
    """Uniform scalar quantizer with ``2**bits`` bins on ``[z_min, z_max]``.

    The interior thresholds are ``z_min + i * delta`` for ``i = 1 ..
    2**bits - 1`` with ``delta = (z_max - z_min) / 2**bits``.  The outermost
    bins extend to minus/plus infinity, so every real value maps to a bin.
    Values exactly equal to a threshold fall in the upper bin.
    """

    bits: int
    z_min: float
    z_max: float

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or self.bits < 1:
            raise ValueError("bits must be a positive integer")
        if self.bits > 24:
            raise ValueError("bits above 24 is not supported")
        if not (np.isfinite(self.z_min) and np.isfinite(self.z_max)):
            raise ValueError("quantizer range must be finite")
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be strictly below z_max")

    @property
    def n_bins(self) -> int:
        return 2 ** self.bits

    @property
    def delta(self) -> float:
        return (self.z_max - self.z_min) / self.n_bins

    @property
    def thresholds(self) -> np.ndarray:
        """The ``2**bits - 1`` interior thresholds, strictly increasing."""
        i = np.arange(1, self.n_bins)
        return self.z_min + i * self.delta

    def quantize(self, values) -> np.ndarray:
        """Map real values to bin indices in ``0 .. 2**bits - 1``."""
        arr = np.asarray(values, dtype=float)
        if np.any(np.isnan(arr)):
            raise ValueError("cannot quantize NaN values")
        # searchsorted with side="right" sends values equal to a threshold
        # into the upper bin
        return np.searchsorted(self.thresholds, arr, side="right")

    def bin_bounds(self, index) -> tuple[float, float]:
        """Lower/upper edge of one bin; the edge bins are half-infinite."""
        idx = int(index)
        if idx < 0 or idx >= self.n_bins:
            raise ValueError(f"bin index {idx} out of range 0..{self.n_bins - 1}")
        lo = -np.inf if idx == 0 else self.z_min + idx * self.delta
        hi = np.inf if idx == self.n_bins - 1 else self.z_min + (idx + 1) * self.delta
        return lo, hi

    def bounds(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`bin_bounds` for an integer array."""
        idx = np.asarray(indices)
        if not np.issubdtype(idx.dtype, np.integer):
            raise ValueError("bin indices must be integers")
        if np.any(idx < 0) or np.any(idx >= self.n_bins):
            raise ValueError("bin index out of range")
        edges = np.concatenate(([-np.inf], self.thresholds, [np.inf]))
        return edges[idx], edges[idx + 1]

    def midpoints(self, indices) -> np.ndarray:
        """Nominal bin centers (edge bins use their finite nominal cell)."""
        idx = np.asarray(indices)
        if np.any(idx < 0) or np.any(idx >= self.n_bins):
            raise ValueError("bin index out of range")
        return self.z_min + (idx + 0.5) * self.delta


# ---------------------------------------------------------------------------
# truncated standard-normal moments
# ---------------------------------------------------------------------------


def _phi(x: np.ndarray) -> np.ndarray:
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def truncated_standard_moments(alpha, beta) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of a standard normal truncated to ``[alpha, beta]``.

    Bounds may be ``+-inf`` and must satisfy ``alpha < beta`` elementwise.
    Intervals that sit entirely in one tail are reflected into the right
    tail and evaluated with ``erfcx`` so nothing underflows; intervals that
    straddle zero are safe to evaluate directly.  Lanes that still come out
    non-finite (bins of essentially zero standardized width) fall back to
    the narrow-bin limit, a uniform distribution on the bin.
    """
    a_in = np.asarray(alpha, dtype=float)
    b_in = np.asarray(beta, dtype=float)
    shape = np.broadcast_shapes(a_in.shape, b_in.shape)
    a = np.broadcast_to(a_in, shape).astype(float, copy=True)
    b = np.broadcast_to(b_in, shape).astype(float, copy=True)
    if not np.all(a < b):
        raise ValueError("require alpha < beta elementwise")

    mean = np.zeros(shape)
    var = np.ones(shape)

    # reflect intervals lying in the left tail into the right tail
    flip = b <= 0.0
    a_w = np.where(flip, -b, a)
    b_w = np.where(flip, -a, b)

    right = a_w >= 0.0
    central = ~right

    if np.any(right):
        ar = a_w[right]
        br = b_w[right]
        ea = erfcx(ar / _SQRT2)
        finite_b = np.isfinite(br)
        br_safe = np.where(finite_b, br, ar + 1.0)
        # exponent written as (b-a)(b+a)/2 to keep narrow bins accurate;
        # infinite upper bounds drop the d-term entirely (exp(-inf) = 0)
        expo = np.where(finite_b, -0.5 * (br_safe - ar) * (br_safe + ar),
                        -np.inf)
        d = np.exp(expo)
        eb = np.where(finite_b, erfcx(br_safe / _SQRT2), 0.0)
        denom = ea - eb * d
        with np.errstate(divide="ignore", invalid="ignore"):
            m1 = _SQRT_2_OVER_PI * (1.0 - d) / denom
            t2 = _SQRT_2_OVER_PI * (ar - br_safe * d) / denom
        mean[right] = m1
        var[right] = 1.0 + t2 - m1 * m1

    if np.any(central):
        ac = a_w[central]
        bc = b_w[central]
        p = 0.5 * (erf(bc / _SQRT2) - erf(ac / _SQRT2))
        pa = _phi(ac)
        pb = _phi(bc)
        # phi vanishes at infinite arguments, so the products are zero there
        ta = np.where(np.isfinite(ac), ac, 0.0) * pa
        tb = np.where(np.isfinite(bc), bc, 0.0) * pb
        with np.errstate(divide="ignore", invalid="ignore"):
            m1 = (pa - pb) / p
            v1 = 1.0 + (ta - tb) / p - m1 * m1
        mean[central] = m1
        var[central] = v1

    mean = np.where(flip, -mean, mean)

    bad = ~(np.isfinite(mean) & np.isfinite(var))
    if np.any(bad):
        # essentially zero-width bins: truncated density -> uniform on bin
        mean[bad] = 0.5 * (a[bad] + b[bad])
        var[bad] = np.square(b[bad] - a[bad]) / 12.0

    np.clip(var, 0.0, 1.0, out=var)
    mean = np.clip(mean, a, b)
    return mean, var


def quantized_moments(means, variance, gamma_w, lower, upper):
    """Posterior moments of ``z ~ N(means, variance)`` given a quantizer bin.

    The observation is that ``x = z + w`` with ``w ~ N(0, 1/gamma_w)`` lies
    in ``[lower, upper)``; bounds may be infinite.  Returns ``(post_mean,
    post_var)`` with the shapes of the broadcast inputs.
    """
    m = np.asarray(means, dtype=float)
    v = float(variance)
    if not (v > 0.0 and np.isfinite(v)):
        raise ValueError("prior variance must be positive and finite")
    if not (gamma_w > 0.0 and np.isfinite(gamma_w)):
        raise ValueError("gamma_w must be positive and finite")
    sigma2 = 1.0 / gamma_w
    s2 = v + sigma2
    s = math.sqrt(s2)
    alpha = (np.asarray(lower, dtype=float) - m) / s
    beta = (np.asarray(upper, dtype=float) - m) / s
    m1, vt = truncated_standard_moments(alpha, beta)
    k = v / s2
    post_mean = m + k * s * m1
    post_var = v * sigma2 / s2 + (v * v / s2) * vt
    return post_mean, post_var


# ---------------------------------------------------------------------------
# channel specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianChannel:
    """Observes ``y = z + w`` with ``w ~ N(0, 1/gamma_w)``."""

    gamma_w: float

    def __post_init__(self):
        if not (self.gamma_w > 0.0 and np.isfinite(self.gamma_w)):
            raise ValueError("gamma_w must be positive and finite")

    @property
    def kind(self) -> str:
        return "gaussian"

    def with_gamma_w(self, gamma_w: float) -> "GaussianChannel":
        return replace(self, gamma_w=float(gamma_w))


@dataclass(frozen=True)
class QuantizedGaussianChannel:
    """Observes the quantizer bin index of ``z + w``, ``w ~ N(0, 1/gamma_w)``."""

    gamma_w: float
    quantizer: Quantizer

    def __post_init__(self):
        if not (self.gamma_w > 0.0 and np.isfinite(self.gamma_w)):
            raise ValueError("gamma_w must be positive and finite")

    @property
    def kind(self) -> str:
        return "quantized-gaussian"

    def with_gamma_w(self, gamma_w: float) -> "QuantizedGaussianChannel":
        return replace(self, gamma_w=float(gamma_w))


def channel_posterior(channel, Y, prior_means, prior_variance):
    """Componentwise posterior moments of Z under the channel likelihood.

    The prior is ``N(prior_means, prior_variance * I)`` with a single scalar
    variance shared by all entries.  Returns ``(z_post, v_post_columns,
    v_post)``: the posterior mean matrix, the per-column averages of the
    posterior variances, and their overall average.

    Parameters
    ----------
    channel:
        :class:`GaussianChannel` or :class:`QuantizedGaussianChannel`.
    Y:
        Measurements; real-valued for the Gaussian channel, integer bin
        indices for the quantized channel.
    prior_means:
        M x L matrix of prior means.
    prior_variance:
        Scalar prior variance, strictly positive.
    """
    m = np.asarray(prior_means, dtype=float)
    v = float(prior_variance)
    if not (v > 0.0 and np.isfinite(v)):
        raise ValueError("prior variance must be positive and finite")

    if isinstance(channel, GaussianChannel):
        y = np.asarray(Y, dtype=float)
        if y.shape != m.shape:
            raise ValueError("Y and prior means must have the same shape")
        post_prec = 1.0 / v + channel.gamma_w
        v_entry = 1.0 / post_prec
        z_post = v_entry * (m / v + channel.gamma_w * y)
        v_cols = np.full(m.shape[1], v_entry)
        v_post = v_entry
    elif isinstance(channel, QuantizedGaussianChannel):
        idx = np.asarray(Y)
        if idx.shape != m.shape:
            raise ValueError("Y and prior means must have the same shape")
        lo, hi = channel.quantizer.bounds(idx)
        z_post, z_var = quantized_moments(m, v, channel.gamma_w, lo, hi)
        v_cols = z_var.mean(axis=0)
        v_post = float(z_var.mean())
    else:
        raise TypeError(f"unknown channel type {type(channel).__name__}")

    if not (np.all(np.isfinite(z_post)) and np.isfinite(v_post)):
        raise NumericsError("channel posterior produced non-finite moments")
    return z_post, v_cols, float(v_post)


def extrinsic_divide(post_mean, post_var, prior_mean, prior_var, clip=None):
    """Divide a Gaussian posterior by a Gaussian prior message.

    Implements the extrinsic update ``ext_prec = 1/post_var - 1/prior_var``
    and ``ext_mean = (post_mean/post_var - prior_mean/prior_var) / ext_prec``.
    Without ``clip`` the raw values are returned; a non-positive precision
    then yields an infinite or negative variance, reported through the
    returned validity flag.  With ``clip=(gamma_min, gamma_max)`` the
    precision is clipped into that interval (NaN maps to ``gamma_min``)
    before the division, so the outputs are always finite.

    Returns ``(ext_mean, ext_var, ok)`` where ``ok`` is True where the raw
    extrinsic precision was strictly positive and finite.
    """
    prec = 1.0 / np.asarray(post_var, dtype=float) - 1.0 / np.asarray(prior_var, dtype=float)
    nat = (np.asarray(post_mean, dtype=float) / post_var
           - np.asarray(prior_mean, dtype=float) / prior_var)
    ok = np.isfinite(prec) & (prec > 0.0)
    if clip is not None:
        gmin, gmax = clip
        prec = np.where(np.isnan(prec), gmin, prec)
        prec = np.clip(prec, gmin, gmax)
    with np.errstate(divide="ignore", invalid="ignore"):
        ext_var = 1.0 / prec
        ext_mean = nat * ext_var
    if np.ndim(ext_var) == 0:
        ext_var = float(ext_var)
        ok = bool(ok)
    return ext_mean, ext_var, ok


def em_update_theta_Y(channel, Y, z_post, v_post, gamma_w_tilde=None, clip=None):
    """EM update of the output-channel noise precision.

    For the Gaussian channel this is the exact maximizer of the expected
    complete-data log-likelihood under the scalar-variance posterior:
    ``1/gamma_w = mean((Y - z_post)**2) + v_post``.  For the quantized
    channel the update returns the pseudo-noise precision learned inside
    the linear core (``gamma_w_tilde``), which stands in for the exact
    update of the quantized likelihood.
    """
    if isinstance(channel, GaussianChannel):
        y = np.asarray(Y, dtype=float)
        z = np.asarray(z_post, dtype=float)
        inv = float(np.mean(np.square(y - z))) + float(v_post)
        with np.errstate(divide="ignore"):
            gamma = np.inf if inv == 0.0 else 1.0 / inv
    elif isinstance(channel, QuantizedGaussianChannel):
        if gamma_w_tilde is None:
            raise ValueError("quantized channel update requires gamma_w_tilde")
        gamma = float(gamma_w_tilde)
    else:
        raise TypeError(f"unknown channel type {type(channel).__name__}")
    if clip is not None:
        gmin, gmax = clip
        if np.isnan(gamma):
            gamma = gmin
        gamma = min(max(gamma, gmin), gmax)
    return float(gamma)
