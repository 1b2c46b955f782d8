"""Statistical model, affine dictionary map, solver configuration and state.

The generative model is::

    X  ~ prod_l p(x_l; theta_X)            columnwise i.i.d. sparse prior
    Z  = A(theta_A) X                       affine dictionary map
    Y  ~ prod_ij p(Y_ij | Z_ij; theta_Y)    componentwise output channel

with ``A(theta_A) = A0 + sum_i theta_A[i] * A_i``.  The solver exchanges
Gaussian messages with scalar variances on the Z side and per-column
precisions on the X side; everything it mutates while running is collected
in :class:`SolverState`, which round-trips bit-identically through
:func:`save_state` / :func:`load_state`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import GaussianChannel, QuantizedGaussianChannel, Quantizer
from .prior import BernoulliGaussianPrior


@dataclass(frozen=True)
class Dimensions:
    """Problem sizes: M measurement rows, N signal rows, L columns, G basis matrices."""

    M: int
    N: int
    L: int
    G: int

    def __post_init__(self):
        for name in ("M", "N", "L", "G"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True, eq=False)
class AffineDictionary:
    """The affine map ``theta -> A0 + sum_i theta[i] * basis[i]``.

    ``A0`` is M x N and ``basis`` holds the G basis matrices stacked into a
    G x M x N array (a sequence of M x N matrices is accepted and stacked).
    """

    A0: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        a0 = np.asarray(self.A0, dtype=float)
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim == 2:
            basis = basis[None, :, :]
        if a0.ndim != 2 or basis.ndim != 3 or basis.shape[1:] != a0.shape:
            raise ValueError("A0 must be M x N and basis G x M x N with matching M, N")
        if basis.shape[0] < 1:
            raise ValueError("need at least one basis matrix")
        object.__setattr__(self, "A0", a0)
        object.__setattr__(self, "basis", basis)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A0.shape

    @property
    def n_params(self) -> int:
        return self.basis.shape[0]

    def evaluate(self, theta_A) -> np.ndarray:
        theta = np.asarray(theta_A, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta_A must have shape ({self.n_params},)")
        return self.A0 + np.tensordot(theta, self.basis, axes=1)


def evaluate_dictionary(dictionary: AffineDictionary, theta_A) -> np.ndarray:
    """Evaluate ``A(theta_A) = A0 + sum_i theta_A[i] * A_i``."""
    return dictionary.evaluate(theta_A)


@dataclass(frozen=True, eq=False)
class GaussianMessage:
    """Gaussian message with matrix means and a scalar or per-column variance."""

    means: np.ndarray
    variance: float | np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        var = self.variance
        if np.ndim(var) == 0:
            var = float(var)
            ok = var > 0.0 and np.isfinite(var)
        else:
            var = np.asarray(var, dtype=float)
            ok = var.shape == (means.shape[1],) and np.all((var > 0.0) & np.isfinite(var))
        if not ok:
            raise ValueError("message variance must be positive and finite")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variance", var)


@dataclass
class ParameterSet:
    """The learned parameters: theta_A (G,), theta_X (prior), theta_Y (noise precision)."""

    theta_A: np.ndarray
    theta_X: BernoulliGaussianPrior
    theta_Y: float

    def __post_init__(self):
        self.theta_A = np.asarray(self.theta_A, dtype=float)
        if self.theta_A.ndim != 1:
            raise ValueError("theta_A must be a vector")
        if not (self.theta_Y > 0.0 and np.isfinite(self.theta_Y)):
            raise ValueError("theta_Y must be a positive finite precision")

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.theta_A.copy(), self.theta_X, float(self.theta_Y))


@dataclass(frozen=True, eq=False)
class ProblemModel:
    """Everything that defines one inference problem instance."""

    dims: Dimensions
    dictionary: AffineDictionary
    prior: BernoulliGaussianPrior
    channel: GaussianChannel | QuantizedGaussianChannel

    def __post_init__(self):
        d = self.dims
        if self.dictionary.shape != (d.M, d.N):
            raise ValueError("dictionary shape does not match dims")
        if self.dictionary.n_params != d.G:
            raise ValueError("dictionary parameter count does not match dims")


@dataclass
class SolverState:
    """Full mutable solver state.

    The Z-side extrinsic messages carry scalar variances; the X-side
    messages carry per-column precisions ``gamma1``/``gamma2``.  ``x1_hat``
    is the denoiser posterior mean, ``x2_hat`` the linear-core posterior
    mean, with per-column posterior precisions ``eta1``/``eta2``.
    """

    zA_ext: GaussianMessage
    zB_ext: GaussianMessage
    r1: np.ndarray
    gamma1: np.ndarray
    r2: np.ndarray
    gamma2: np.ndarray
    x1_hat: np.ndarray
    eta1: np.ndarray
    x2_hat: np.ndarray
    eta2: np.ndarray
    gamma_w_tilde: float
    params: ParameterSet
    iteration: int = 0
    nan_clip_count: int = 0

    def copy(self) -> "SolverState":
        return SolverState(
            zA_ext=GaussianMessage(self.zA_ext.means.copy(), _copy_var(self.zA_ext.variance)),
            zB_ext=GaussianMessage(self.zB_ext.means.copy(), _copy_var(self.zB_ext.variance)),
            r1=self.r1.copy(), gamma1=self.gamma1.copy(),
            r2=self.r2.copy(), gamma2=self.gamma2.copy(),
            x1_hat=self.x1_hat.copy(), eta1=self.eta1.copy(),
            x2_hat=self.x2_hat.copy(), eta2=self.eta2.copy(),
            gamma_w_tilde=float(self.gamma_w_tilde),
            params=self.params.copy(),
            iteration=self.iteration,
            nan_clip_count=self.nan_clip_count,
        )


def _copy_var(v):
    return float(v) if np.ndim(v) == 0 else np.asarray(v).copy()


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Iteration counts, damping, clipping bounds, learn flags, init policy.

    ``damping`` multiplies the new value (1.0 disables damping).  The
    ``learn_*`` flags switch individual EM updates on or off; a disabled
    parameter keeps its configured initial value for the whole run.
    ``damp_z_messages`` extends damping to the extrinsic Z messages (off by
    default: damping normally guards only ``r1, gamma1, gamma2, r2``).
    ``gaussian_fast_path`` replaces the Gaussian-channel posterior/extrinsic
    round trip by its analytic fixed point (the pseudo-observation is then
    exactly ``(Y, gamma_w)``); it requires ``learn_theta_Y=False``.
    ``z_ext_var_cap`` tightens the clip interval for the two extrinsic
    messages on the Z interface: their variances are capped at this value
    (precisions floored at its reciprocal).  An extrinsic message about Z
    that is weaker than the marginal scale of Z carries no information, so
    a natural cap is the empirical variance of the channel-stage
    initialization; keeping the messages on that scale bounds the pseudo
    observations and with them the dictionary refit, which otherwise can
    amplify an expanding Z state without bound when the output channel is
    nearly scale-invariant (saturated low-bit quantization).  ``None``
    leaves the interface under the global ``gamma_min`` alone.
    """

    T_outer: int = 50
    T_inner1: int = 1
    T_inner2: int = 2
    damping: float = 0.8
    gamma_min: float = 1e-8
    gamma_max: float = 1e12
    learn_theta_A: bool = True
    learn_theta_X: bool = True
    learn_theta_Y: bool = True
    learn_gamma_w: bool = True
    learn_gamma1: bool = True
    learn_mu: bool = False
    damp_z_messages: bool = False
    gaussian_fast_path: bool = False
    init_theta_A: np.ndarray | None = None
    init_prior: BernoulliGaussianPrior | None = None
    init_gamma2: float = 1e-2
    z_ext_var_cap: float | None = None

    def __post_init__(self):
        if self.T_outer < 0 or self.T_inner1 < 1 or self.T_inner2 < 1:
            raise ValueError("T_outer must be >= 0 and inner counts >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if not (0.0 < self.gamma_min < self.gamma_max):
            raise ValueError("require 0 < gamma_min < gamma_max")
        if self.init_gamma2 <= 0.0:
            raise ValueError("init_gamma2 must be positive")
        if self.z_ext_var_cap is not None and not self.z_ext_var_cap > 0.0:
            raise ValueError("z_ext_var_cap must be positive when set")
        if self.gaussian_fast_path and self.learn_theta_Y:
            raise ValueError("gaussian_fast_path requires learn_theta_Y=False")
        if self.init_theta_A is not None:
            object.__setattr__(self, "init_theta_A",
                               np.asarray(self.init_theta_A, dtype=float))


# ---------------------------------------------------------------------------
# state serialization (bit-exact npz round trip)
# ---------------------------------------------------------------------------

_STATE_ARRAYS = ("r1", "gamma1", "r2", "gamma2", "x1_hat", "eta1",
                 "x2_hat", "eta2")


def save_state(state: SolverState, path) -> None:
    """Serialize a solver state to an ``.npz`` file, preserving exact bits."""
    payload = {name: getattr(state, name) for name in _STATE_ARRAYS}
    payload["zA_means"] = state.zA_ext.means
    payload["zA_var"] = np.asarray(state.zA_ext.variance, dtype=float)
    payload["zB_means"] = state.zB_ext.means
    payload["zB_var"] = np.asarray(state.zB_ext.variance, dtype=float)
    payload["theta_A"] = state.params.theta_A
    payload["theta_X"] = np.array([state.params.theta_X.rho,
                                   state.params.theta_X.mu,
                                   state.params.theta_X.psi])
    payload["scalars"] = np.array([state.gamma_w_tilde, state.params.theta_Y])
    payload["counters"] = np.array([state.iteration, state.nan_clip_count],
                                   dtype=np.int64)
    np.savez(path, **payload)


def load_state(path) -> SolverState:
    """Inverse of :func:`save_state`."""
    with np.load(path) as data:
        rho, mu, psi = data["theta_X"]
        gamma_w_tilde, theta_Y = data["scalars"]
        iteration, nan_clips = data["counters"]
        return SolverState(
            zA_ext=GaussianMessage(data["zA_means"], _unpack_var(data["zA_var"])),
            zB_ext=GaussianMessage(data["zB_means"], _unpack_var(data["zB_var"])),
            r1=data["r1"], gamma1=data["gamma1"],
            r2=data["r2"], gamma2=data["gamma2"],
            x1_hat=data["x1_hat"], eta1=data["eta1"],
            x2_hat=data["x2_hat"], eta2=data["eta2"],
            gamma_w_tilde=float(gamma_w_tilde),
            params=ParameterSet(data["theta_A"],
                                BernoulliGaussianPrior(float(rho), float(mu), float(psi)),
                                float(theta_Y)),
            iteration=int(iteration),
            nan_clip_count=int(nan_clips),
        )


def _unpack_var(arr):
    arr = np.asarray(arr)
    return float(arr) if arr.ndim == 0 else arr
