"""Error metrics for the recovery experiments.

Bilinear models fix ``A(b) X`` only up to a scalar exchanged between the
two factors, so the one-bit experiments report errors after removing the
best scalar gain (``dnmse``, ``nmse_dict``) or on the gain-invariant outer
product (``nmse_product``).  The multi-bit experiments use the plain ratio.

Note the vector metrics (``nmse``, ``dnmse``) are defined on the norm
ratio itself, while the matrix metrics (``nmse_product``, ``nmse_dict``)
are defined on squared Frobenius norms.
"""

from __future__ import annotations

import numpy as np


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return arr


def _db_of_ratio(value: float) -> float:
    if value == 0.0:
        return float("-inf")
    return float(10.0 * np.log10(value))


def nmse(truth, estimate) -> float:
    """``10 log10(||truth - estimate|| / ||truth||)`` for vectors."""
    t = _as_vector(truth, "truth")
    e = _as_vector(estimate, "estimate")
    t_norm = float(np.linalg.norm(t))
    if t_norm == 0.0:
        raise ValueError("truth must be nonzero")
    return _db_of_ratio(float(np.linalg.norm(t - e)) / t_norm)


def dnmse(truth, estimate) -> float:
    """NMSE after removing the best scalar gain on the estimate.

    Minimizes ``||truth - xi * estimate||`` over the scalar ``xi``; the
    minimizer is ``xi = <estimate, truth> / ||estimate||^2``.  An all-zero
    estimate carries no direction information and returns ``+inf``.
    """
    t = _as_vector(truth, "truth")
    e = _as_vector(estimate, "estimate")
    t_norm = float(np.linalg.norm(t))
    if t_norm == 0.0:
        raise ValueError("truth must be nonzero")
    e_sq = float(e @ e)
    if e_sq == 0.0:
        return float("inf")
    xi = float(e @ t) / e_sq
    return _db_of_ratio(float(np.linalg.norm(t - xi * e)) / t_norm)


def nmse_product(b, c, b_hat, c_hat) -> float:
    """Squared-Frobenius NMSE of the rank-one product ``b c^T``.

    Invariant under the reciprocal-gain ambiguity ``(alpha b, c / alpha)``.
    """
    b = _as_vector(b, "b")
    c = _as_vector(c, "c")
    bh = _as_vector(b_hat, "b_hat")
    ch = _as_vector(c_hat, "c_hat")
    truth = np.outer(b, c)
    denom = float(np.sum(truth * truth))
    if denom == 0.0:
        raise ValueError("b c^T must be nonzero")
    diff = np.outer(bh, ch) - truth
    return _db_of_ratio(float(np.sum(diff * diff)) / denom)


def nmse_dict(A, A_hat) -> float:
    """Squared-Frobenius NMSE of a dictionary up to a scalar gain.

    Minimizes ``||A - lam * A_hat||_F^2`` over ``lam``; the minimizer is
    ``lam = tr(A_hat^T A) / ||A_hat||_F^2`` (an all-zero estimate gets
    ``lam = 0``).
    """
    A = np.asarray(A, dtype=float)
    Ah = np.asarray(A_hat, dtype=float)
    if A.shape != Ah.shape:
        raise ValueError("A and A_hat must have the same shape")
    denom = float(np.sum(A * A))
    if denom == 0.0:
        raise ValueError("A must be nonzero")
    ah_sq = float(np.sum(Ah * Ah))
    lam = float(np.sum(Ah * A)) / ah_sq if ah_sq > 0.0 else 0.0
    diff = A - lam * Ah
    return _db_of_ratio(float(np.sum(diff * diff)) / denom)
