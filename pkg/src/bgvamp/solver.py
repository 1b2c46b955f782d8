"""Outer EP loop joining the output channel and the bilinear linear core.

One outer iteration performs, in order: the componentwise channel posterior
of Z, the extrinsic division that yields the pseudo linear observation, the
inner LMMSE/EM block over the dictionary parameters and pseudo-noise
precision, the extrinsic message to the sparsity denoiser, the inner
denoise/EM block over the prior parameters, the extrinsic message back, the
Z-side posterior and extrinsic under the updated dictionary, and finally
the EM update of the output-channel parameter.

Stability follows two rules: ``r1, gamma1, gamma2, r2`` are damped against
their previous outer-iteration values (precisions in the precision domain),
and every precision is clipped into ``[gamma_min, gamma_max]`` with NaN
mapping to ``gamma_min``.  A non-finite state aborts the run with a
diagnostic dump of the history up to the last valid iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channels import channel_posterior, em_update_theta_Y, extrinsic_divide
from .core import (PseudoObservation, em_update_gamma_w, em_update_theta_A,
                   extrinsic_x_backward, extrinsic_x_forward, extrinsic_z,
                   lmmse, z_posterior)
from .exceptions import NumericsError, SolverDivergenceError
from .model import (GaussianMessage, ParameterSet, ProblemModel, SolverConfig,
                    SolverState)
from .prior import (BernoulliGaussianPrior, DenoiseResult, denoise,
                    em_update_gamma1, em_update_theta_X)


def damp(new_value, old_value, factor: float):
    """Convex combination ``factor * new + (1 - factor) * old``."""
    return factor * new_value + (1.0 - factor) * old_value


def clip_precision(values, gamma_min: float = 1e-8, gamma_max: float = 1e12):
    """Clip precisions into ``[gamma_min, gamma_max]``; NaN maps to the floor."""
    arr = np.asarray(values, dtype=float)
    arr = np.where(np.isnan(arr), gamma_min, arr)
    arr = np.clip(arr, gamma_min, gamma_max)
    return float(arr) if arr.ndim == 0 else arr


@dataclass
class RunOptions:
    """Run-time knobs that are not part of the algorithm configuration.

    ``observer`` is called once per outer iteration with a state snapshot;
    an exception raised there aborts the run.  ``metrics`` maps metric
    names to callables evaluated on each snapshot, recorded per iteration.
    ``fixed_signal`` replaces the denoiser by a point mass at the given
    N x L matrix (the known-signal oracle baseline); the prior-side EM
    updates are skipped in that mode.
    """

    config: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    observer: Callable[[SolverState], None] | None = None
    metrics: dict[str, Callable[[SolverState], float]] | None = None
    fixed_signal: np.ndarray | None = None


@dataclass
class RunRecord:
    """Scalar trace of one outer iteration (the diagnostic-dump row)."""

    iteration: int
    v_B_post: float
    v_B_ext: float
    gamma_w_tilde: float
    v_A_post: float
    v_A_ext: float
    theta_Y: float
    rho: float
    mu: float
    psi: float
    gamma1_mean: float
    gamma2_mean: float
    eta1_mean: float
    eta2_mean: float
    residual: float
    nan_clips: int
    theta_A: np.ndarray
    metrics: dict[str, float] = field(default_factory=dict)


@dataclass
class RunResult:
    """Final estimates plus the per-iteration history.

    ``x_hat`` is the prior-aware estimate (denoiser posterior mean at the
    last iteration); ``x2_hat`` is the linear-core counterpart.
    """

    x_hat: np.ndarray
    x2_hat: np.ndarray
    params: ParameterSet
    history: list[RunRecord]
    state: SolverState


_DUMP_COLUMNS = ("iteration", "v_B_post", "v_B_ext", "gamma_w_tilde",
                 "v_A_post", "v_A_ext", "theta_Y", "rho", "mu", "psi",
                 "gamma1_mean", "gamma2_mean", "eta1_mean", "eta2_mean",
                 "residual", "nan_clips", "theta_A")


def history_dump(history: list[RunRecord]) -> str:
    """Render the history as tab-separated text with a fixed column order."""
    lines = ["\t".join(_DUMP_COLUMNS)]
    for rec in history:
        cells = []
        for name in _DUMP_COLUMNS[:-1]:
            value = getattr(rec, name)
            cells.append(str(value) if isinstance(value, int) else f"{value:.17g}")
        cells.append(",".join(f"{v:.17g}" for v in rec.theta_A))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def initialize(model: ProblemModel, config: SolverConfig, Y,
               rng: np.random.Generator | None = None) -> SolverState:
    """Build the iteration-zero state.

    The Z-side extrinsic starts at the dequantized measurements (bin
    midpoints for the quantized channel, Y itself for the Gaussian one)
    with their empirical variance; ``r2`` starts at zero with precision
    ``init_gamma2``.  The dictionary coefficients start at ``init_theta_A``
    or a standard-normal draw, the prior at ``init_prior`` or a weakly
    sparse default, and the channel parameter at the model's value.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    dims = model.dims
    M, N, L, G = dims.M, dims.N, dims.L, dims.G

    if model.channel.kind == "quantized-gaussian":
        means0 = model.channel.quantizer.midpoints(np.asarray(Y))
    else:
        means0 = np.array(Y, dtype=float)
    if means0.shape != (M, L):
        raise ValueError("Y shape does not match model dimensions")
    var0 = float(np.var(means0))
    if not np.isfinite(var0) or var0 < 1.0 / config.gamma_max:
        var0 = 1.0 / config.gamma_max
    elif var0 > 1.0 / config.gamma_min:
        var0 = 1.0 / config.gamma_min

    if config.init_theta_A is not None:
        if config.init_theta_A.shape != (G,):
            raise ValueError("init_theta_A has the wrong length")
        theta_A0 = config.init_theta_A.copy()
    else:
        theta_A0 = rng.standard_normal(G)
    prior0 = config.init_prior if config.init_prior is not None \
        else BernoulliGaussianPrior(0.2, 0.0, 1.0)

    return SolverState(
        zA_ext=GaussianMessage(means0.astype(float), var0),
        zB_ext=GaussianMessage(np.zeros((M, L)), 1.0),
        r1=np.zeros((N, L)), gamma1=np.ones(L),
        r2=np.zeros((N, L)), gamma2=np.full(L, config.init_gamma2),
        x1_hat=np.zeros((N, L)), eta1=np.ones(L),
        x2_hat=np.zeros((N, L)), eta2=np.ones(L),
        gamma_w_tilde=1.0,
        params=ParameterSet(theta_A0, prior0, model.channel.gamma_w),
        iteration=0,
    )


def _point_mass(fixed: np.ndarray, L: int, gamma_max: float) -> DenoiseResult:
    return DenoiseResult(x1_hat=fixed, eta1=np.full(L, gamma_max),
                         responsibility=np.ones_like(fixed),
                         active_mean=fixed, active_var=np.zeros(L))


def _state_finite(state: SolverState) -> bool:
    arrays = (state.r1, state.r2, state.x1_hat, state.x2_hat,
              state.zA_ext.means, state.zB_ext.means, state.params.theta_A)
    if not all(np.all(np.isfinite(a)) for a in arrays):
        return False
    scalars = (state.gamma_w_tilde, state.params.theta_Y,
               float(np.asarray(state.zA_ext.variance).mean()),
               float(np.asarray(state.zB_ext.variance).mean()))
    return all(np.isfinite(s) for s in scalars)


def run(model: ProblemModel, Y, options: RunOptions | None = None) -> RunResult:
    """Execute the full message-passing loop for ``config.T_outer`` iterations.

    Raises :class:`SolverDivergenceError` if the state leaves the finite
    range; the exception carries a text dump of the history up to the last
    valid iteration.
    """
    if options is None:
        options = RunOptions()
    cfg = options.config
    if cfg.gaussian_fast_path and model.channel.kind != "gaussian":
        raise ValueError("gaussian_fast_path requires a gaussian channel")
    if options.fixed_signal is not None:
        fixed = np.asarray(options.fixed_signal, dtype=float)
        if fixed.shape != (model.dims.N, model.dims.L):
            raise ValueError("fixed_signal has the wrong shape")
    else:
        fixed = None

    rng = np.random.default_rng(options.seed)
    state = initialize(model, cfg, Y, rng)
    clip = (cfg.gamma_min, cfg.gamma_max)
    dictionary = model.dictionary
    history: list[RunRecord] = []

    for t in range(1, cfg.T_outer + 1):
        try:
            record = _outer_iteration(model, Y, state, cfg, clip, fixed, t,
                                      dictionary)
        except (NumericsError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SolverDivergenceError(
                f"solver state left the finite range at iteration {t}: {exc}",
                diagnostic=history_dump(history), iteration=t) from exc
        if not _state_finite(state):
            raise SolverDivergenceError(
                f"solver state left the finite range at iteration {t}",
                diagnostic=history_dump(history), iteration=t)
        if options.metrics:
            record.metrics = {name: float(fn(state))
                              for name, fn in options.metrics.items()}
        history.append(record)
        if options.observer is not None:
            options.observer(state.copy())

    return RunResult(x_hat=state.x1_hat.copy(), x2_hat=state.x2_hat.copy(),
                     params=state.params.copy(), history=history, state=state)


def _outer_iteration(model, Y, state, cfg, clip, fixed, t, dictionary):
    nan_before = state.nan_clip_count
    channel = model.channel.with_gamma_w(state.params.theta_Y)
    vA_ext = float(state.zA_ext.variance)
    # the Z-interface messages may carry a tighter floor than the global
    # gamma_min (see SolverConfig.z_ext_var_cap)
    z_clip = clip
    if cfg.z_ext_var_cap is not None:
        z_clip = (max(clip[0], 1.0 / cfg.z_ext_var_cap), clip[1])

    # --- channel posterior of Z and extrinsic division into a pseudo
    # observation
    if cfg.gaussian_fast_path:
        vB_post = float("nan")
        zB_post = None
        y_tilde = np.asarray(Y, dtype=float)
        gamma_w_tilde = clip_precision(channel.gamma_w, *clip)
        vB_ext = 1.0 / gamma_w_tilde
    else:
        zB_post, _vB_cols, vB_post = channel_posterior(
            channel, Y, state.zA_ext.means, vA_ext)
        raw = 1.0 / vB_post - 1.0 / vA_ext
        state.nan_clip_count += int(np.isnan(raw))
        y_tilde, vB_ext, _ok = extrinsic_divide(
            zB_post, vB_post, state.zA_ext.means, vA_ext, clip=z_clip)
        gamma_w_tilde = 1.0 / vB_ext
    if cfg.damp_z_messages and t > 1:
        y_tilde = damp(y_tilde, state.zB_ext.means, cfg.damping)
        gamma_w_tilde = damp(gamma_w_tilde, 1.0 / float(state.zB_ext.variance),
                             cfg.damping)
        vB_ext = 1.0 / gamma_w_tilde
    state.zB_ext = GaussianMessage(y_tilde, vB_ext)
    pseudo = PseudoObservation(y_tilde, gamma_w_tilde)

    # --- inner block 1: LMMSE of X and EM over theta_A / gamma_w_tilde.
    # EM consumes the dictionary at the pre-update coefficients, so A is
    # evaluated before theta_A changes and re-evaluated next pass.
    posterior = None
    for _ in range(cfg.T_inner1):
        A_prev = dictionary.evaluate(state.params.theta_A)
        posterior = lmmse(A_prev, pseudo, state.r2, state.gamma2)
        if cfg.learn_theta_A:
            state.params.theta_A = em_update_theta_A(dictionary, posterior,
                                                     pseudo)
        if cfg.learn_gamma_w:
            gw = em_update_gamma_w(A_prev, posterior, pseudo, clip=clip)
            pseudo = pseudo.with_precision(gw)
    if cfg.learn_theta_A or cfg.learn_gamma_w:
        # the message toward the denoiser is formed from the estimate under
        # the just-updated parameters; with learning off the refresh would
        # reproduce the loop's last posterior exactly, so it is skipped
        posterior = lmmse(dictionary.evaluate(state.params.theta_A), pseudo,
                          state.r2, state.gamma2)
    state.gamma_w_tilde = pseudo.gamma_w_tilde
    state.x2_hat = posterior.x2_hat
    state.eta2 = clip_precision(posterior.eta2, *clip)

    # --- extrinsic message toward the denoiser, damped across outer
    # iterations (first iteration has no predecessor)
    raw1 = posterior.eta2 - state.gamma2
    state.nan_clip_count += int(np.count_nonzero(np.isnan(raw1)))
    r1_new, gamma1_new, _ok = extrinsic_x_forward(posterior, state.r2,
                                                  state.gamma2, clip=clip)
    if t > 1:
        r1_new = damp(r1_new, state.r1, cfg.damping)
        gamma1_new = damp(gamma1_new, state.gamma1, cfg.damping)
    state.r1 = r1_new
    state.gamma1 = gamma1_new

    # --- inner block 2: denoise and EM over theta_X / gamma1
    den = None
    prior = state.params.theta_X
    for _ in range(cfg.T_inner2):
        if fixed is not None:
            den = _point_mass(fixed, model.dims.L, cfg.gamma_max)
        else:
            den = denoise(prior, state.r1, state.gamma1)
            if cfg.learn_theta_X:
                prior = em_update_theta_X(prior, den, learn_rho=True,
                                          learn_mu=cfg.learn_mu,
                                          learn_psi=True)
            if cfg.learn_gamma1:
                state.gamma1 = clip_precision(
                    em_update_gamma1(den.x1_hat, den.eta1, state.r1), *clip)
    state.params.theta_X = prior
    state.x1_hat = den.x1_hat
    state.eta1 = clip_precision(den.eta1, *clip)

    raw2 = den.eta1 - state.gamma1
    state.nan_clip_count += int(np.count_nonzero(np.isnan(raw2)))
    r2_new, gamma2_new, _ok = extrinsic_x_backward(den.x1_hat, den.eta1,
                                                   state.r1, state.gamma1,
                                                   clip=clip)
    if t > 1:
        r2_new = damp(r2_new, state.r2, cfg.damping)
        gamma2_new = damp(gamma2_new, state.gamma2, cfg.damping)
    state.r2 = r2_new
    state.gamma2 = gamma2_new

    # --- Z-side posterior under the updated dictionary, extrinsic back to
    # the channel (divided by the channel message stored above)
    A_t = dictionary.evaluate(state.params.theta_A)
    z_post_A, _vA_cols, vA_post = z_posterior(A_t, pseudo, state.r2,
                                              state.gamma2)
    # clip in the variance domain (identical interval, no reciprocal round
    # trip for in-range values)
    gmin, gmax = clip
    vA_post = float(np.clip(vA_post, 1.0 / gmax, 1.0 / gmin))
    raw_A = 1.0 / vA_post - 1.0 / float(state.zB_ext.variance)
    state.nan_clip_count += int(np.isnan(raw_A))
    zA_means, vA_ext_new, _ok = extrinsic_z(z_post_A, vA_post,
                                            state.zB_ext.means,
                                            float(state.zB_ext.variance),
                                            clip=z_clip)
    state.zA_ext = GaussianMessage(zA_means, vA_ext_new)

    # --- output-channel parameter update
    if cfg.learn_theta_Y:
        state.params.theta_Y = em_update_theta_Y(
            channel, Y, zB_post, vB_post,
            gamma_w_tilde=pseudo.gamma_w_tilde, clip=clip)

    state.iteration = t

    y_norm = float(np.linalg.norm(y_tilde))
    res = float(np.linalg.norm(y_tilde - A_t @ state.x2_hat))
    residual = res / y_norm if y_norm > 0 else float("nan")
    th = state.params.theta_X
    return RunRecord(
        iteration=t, v_B_post=float(vB_post), v_B_ext=float(vB_ext),
        gamma_w_tilde=float(state.gamma_w_tilde), v_A_post=float(vA_post),
        v_A_ext=float(vA_ext_new), theta_Y=float(state.params.theta_Y),
        rho=th.rho, mu=th.mu, psi=th.psi,
        gamma1_mean=float(np.mean(state.gamma1)),
        gamma2_mean=float(np.mean(state.gamma2)),
        eta1_mean=float(np.mean(state.eta1)),
        eta2_mean=float(np.mean(state.eta2)),
        residual=residual,
        nan_clips=state.nan_clip_count,
        theta_A=state.params.theta_A.copy(),
    )
