"""Problem generators and the Monte Carlo experiment harness.

Three scenarios are covered: compressed sensing with an uncertain
measurement matrix (swept over the sampling rate M/N), blind
self-calibration with a Hadamard-modulated mixing matrix (swept over M/N
by shrinking N at fixed M), and structured dictionary learning (swept over
the training length L).  Each trial draws a fresh instance, runs the
solver, and records per-iteration error metrics; grid points are
aggregated by the median over trials.

Seeding gives every (grid point, trial) pair an independent deterministic
stream, so trials are reproducible in isolation and identical CSV output
is produced on every rerun with the same spec.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .channels import GaussianChannel, QuantizedGaussianChannel, Quantizer
from .exceptions import SolverDivergenceError
from .metrics import dnmse, nmse, nmse_dict, nmse_product
from .model import AffineDictionary, Dimensions, ProblemModel
from .prior import BernoulliGaussianPrior
from .solver import RunOptions, SolverConfig, run

KINDS = ("cs-mu", "self-cal", "dict-learn")
ORACLES = ("none", "fix-b", "fix-c")

# dictionary-entry variance of the offset term in the cs-mu scenario
_A0_VARIANCE = 20.0


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one sweep needs: scenario, sizes, grid, seeds, solver knobs.

    ``grid`` holds sampling rates M/N (cs-mu and self-cal) or training
    lengths L (dict-learn).  ``bits`` of ``None`` means no quantizer (the
    Gaussian channel).  ``quantizer_range`` is either ``"auto"`` (per-trial
    realized min/max of the noisy unquantized measurements) or an explicit
    ``(z_min, z_max)`` pair.  ``g`` defaults per scenario when omitted.
    """

    kind: str
    grid: tuple = (1.0,)
    bits: int | None = 1
    snr_db: float = 40.0
    n: int = 64
    m: int = 128
    g: int | None = None
    k: int = 10
    l: int = 1
    trials: int = 11
    seed: int = 0
    oracle: str = "none"
    outer_iters: int = 50
    inner1: int = 1
    inner2: int = 2
    damping: float = 0.8
    quantizer_range: str | tuple = "auto"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.oracle not in ORACLES:
            raise ValueError(f"oracle must be one of {ORACLES}")
        if self.trials < 1 or len(self.grid) < 1:
            raise ValueError("need at least one trial and one grid point")
        if self.bits is not None and not (1 <= int(self.bits) <= 24):
            raise ValueError("bits must be in 1..24 or None")
        if self.k > self.n:
            raise ValueError("sparsity k cannot exceed n")

    @property
    def g_value(self) -> int:
        if self.g is not None:
            return self.g
        return {"cs-mu": 10, "self-cal": 8, "dict-learn": self.n}[self.kind]


@dataclass(frozen=True, eq=False)
class TrialData:
    """One generated problem instance plus its ground truth."""

    model: ProblemModel
    Y: np.ndarray
    b: np.ndarray
    X: np.ndarray
    A: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    gamma_w: float


@dataclass
class TrialResult:
    """Outcome of a single solver run inside a sweep."""

    grid_value: float
    trial: int
    diverged: bool
    wall_time: float
    final_metrics: dict[str, float] = field(default_factory=dict)


def _sparse_matrix(n: int, l: int, k: int, rng: np.random.Generator) -> np.ndarray:
    X = np.zeros((n, l))
    for j in range(l):
        support = rng.choice(n, size=k, replace=False)
        X[support, j] = rng.standard_normal(k)
    return X


def _finish_instance(A0, basis, b, X, snr_db, signal_energy, bits,
                     quantizer_range, k, n, rng) -> TrialData:
    """Shared tail of all generators: noise scaling, channel, measurements."""
    basis = np.asarray(basis)
    G, M, N = basis.shape
    L = X.shape[1]
    dictionary = AffineDictionary(A0, basis)
    A = dictionary.evaluate(b)
    Z = A @ X

    snr_lin = np.inf if np.isinf(snr_db) else 10.0 ** (snr_db / 10.0)
    if np.isinf(snr_lin):
        gamma_w = 1e12
        W = np.zeros((M, L))
    else:
        # SNR = E||A X||_F^2 / E||W||_F^2 with E||W||_F^2 = M L / gamma_w
        gamma_w = snr_lin * M * L / signal_energy
        W = rng.standard_normal((M, L)) / np.sqrt(gamma_w)

    noisy = Z + W
    if bits is None:
        channel = GaussianChannel(gamma_w)
        Y = noisy
    else:
        if quantizer_range == "auto":
            z_lo, z_hi = float(noisy.min()), float(noisy.max())
            if z_lo >= z_hi:
                z_lo, z_hi = z_lo - 0.5, z_hi + 0.5
        else:
            z_lo, z_hi = quantizer_range
        quantizer = Quantizer(int(bits), z_lo, z_hi)
        channel = QuantizedGaussianChannel(gamma_w, quantizer)
        Y = quantizer.quantize(noisy)

    model = ProblemModel(dims=Dimensions(M, N, L, G), dictionary=dictionary,
                         prior=BernoulliGaussianPrior(k / n, 0.0, 1.0),
                         channel=channel)
    return TrialData(model=model, Y=Y, b=b, X=X, A=A, Z=Z, W=W,
                     gamma_w=float(gamma_w))


def gen_cs_mu(spec: ExperimentSpec, rng: np.random.Generator,
              m: int | None = None) -> TrialData:
    """CS with matrix uncertainty: dense random offset plus G perturbations.

    The offset entries have variance 20 and the perturbation matrices unit
    variance, so with standard-normal coefficients the expected signal
    energy is ``M * K * (20 + G)``.
    """
    n, k, g = spec.n, spec.k, spec.g_value
    if m is None:
        m = spec.m
    A0 = rng.standard_normal((m, n)) * np.sqrt(_A0_VARIANCE)
    basis = rng.standard_normal((g, m, n))
    b = rng.standard_normal(g)
    X = _sparse_matrix(n, 1, k, rng)
    signal_energy = m * k * (_A0_VARIANCE + g)
    return _finish_instance(A0, basis, b, X, spec.snr_db, signal_energy,
                            spec.bits, spec.quantizer_range, k, n, rng)


def gen_self_cal(spec: ExperimentSpec, rng: np.random.Generator,
                 n: int | None = None) -> TrialData:
    """Blind self-calibration: unknown per-row gains on a random mixing matrix.

    The gain vector lives in the span of G random Hadamard columns, giving
    basis matrices ``diag(h_i) Psi`` with zero offset and expected signal
    energy ``M * K * G``.
    """
    m, k, g = spec.m, spec.k, spec.g_value
    if n is None:
        n = spec.n
    if m & (m - 1) != 0:
        raise ValueError("self-cal requires m to be a power of two")
    if g > m:
        raise ValueError("self-cal requires g <= m")
    H = hadamard(m).astype(float)
    columns = rng.choice(m, size=g, replace=False)
    psi = rng.standard_normal((m, n))
    basis = np.stack([H[:, j, None] * psi for j in columns])
    A0 = np.zeros((m, n))
    b = rng.standard_normal(g)
    X = _sparse_matrix(n, 1, k, rng)
    signal_energy = m * k * g
    return _finish_instance(A0, basis, b, X, spec.snr_db, signal_energy,
                            spec.bits, spec.quantizer_range, k, n, rng)


def gen_dict_learn(spec: ExperimentSpec, rng: np.random.Generator,
                   l: int | None = None) -> TrialData:
    """Structured dictionary learning: square dictionary, L sparse columns.

    All basis matrices are unit-variance random, zero offset; expected
    signal energy is ``L * M * K * G``.
    """
    n, k = spec.n, spec.k
    m = n
    g = spec.g_value
    if l is None:
        l = spec.l
    A0 = np.zeros((m, n))
    basis = rng.standard_normal((g, m, n))
    b = rng.standard_normal(g)
    X = _sparse_matrix(n, l, k, rng)
    signal_energy = l * m * k * g
    return _finish_instance(A0, basis, b, X, spec.snr_db, signal_energy,
                            spec.bits, spec.quantizer_range, k, n, rng)


def _metric_closures(spec: ExperimentSpec, data: TrialData) -> dict:
    """Per-iteration metric callables evaluated on solver state snapshots."""
    one_bit = spec.bits == 1
    metrics = {}
    if spec.kind == "cs-mu":
        err = dnmse if one_bit else nmse
        prefix = "dnmse" if one_bit else "nmse"
        metrics[f"{prefix}_c_db"] = \
            lambda s: err(data.X[:, 0], s.x1_hat[:, 0])
        metrics[f"{prefix}_b_db"] = \
            lambda s: err(data.b, s.params.theta_A)
    elif spec.kind == "self-cal":
        metrics["nmse_product_db"] = \
            lambda s: nmse_product(data.b, data.X[:, 0], s.params.theta_A,
                                   s.x1_hat[:, 0])
        metrics["dnmse_c_db"] = lambda s: dnmse(data.X[:, 0], s.x1_hat[:, 0])
        metrics["dnmse_b_db"] = lambda s: dnmse(data.b, s.params.theta_A)
    else:
        dictionary = data.model.dictionary
        metrics["nmse_dict_db"] = \
            lambda s: nmse_dict(data.A, dictionary.evaluate(s.params.theta_A))
    return metrics


def _observed_values(data: TrialData) -> np.ndarray:
    """The measurements on the Z scale.

    For a quantized channel ``Y`` holds bin indices; the value carried by a
    bin is its midpoint (the outer bins are delimited by the quantizer
    range).  For the Gaussian channel ``Y`` already lives on the Z scale.
    """
    if data.model.channel.kind == "gaussian":
        return np.asarray(data.Y, dtype=float)
    quantizer = data.model.channel.quantizer
    lower = np.concatenate(([quantizer.z_min], quantizer.thresholds))
    upper = np.concatenate((quantizer.thresholds, [quantizer.z_max]))
    midpoints = 0.5 * (lower + upper)
    return midpoints[np.asarray(data.Y, dtype=int)]


def _solver_config(spec: ExperimentSpec, data: TrialData) -> SolverConfig:
    fix_b = spec.oracle == "fix-b"
    quantized = data.model.channel.kind != "gaussian"
    return SolverConfig(
        T_outer=spec.outer_iters, T_inner1=spec.inner1, T_inner2=spec.inner2,
        damping=spec.damping,
        learn_theta_A=not fix_b,
        learn_theta_X=True,
        learn_theta_Y=True,
        learn_gamma_w=True,
        learn_gamma1=True,
        init_theta_A=data.b.copy() if fix_b else None,
        # start the linear stage's cavity at the prior's marginal precision
        init_gamma2=5.0,
        # under saturating quantization the likelihood is close to
        # scale-invariant, so the Z-interface messages are kept on the
        # scale the measurements themselves establish
        z_ext_var_cap=(max(float(np.var(_observed_values(data))), 1e-12)
                       if quantized else None),
    )


def _blind_model(data: TrialData) -> ProblemModel:
    """The instance as the solver sees it.

    The channel's noise precision starts at the uninformative value
    ``1/var(observed values)`` and is EM-learned; the generator's true
    precision never reaches the solver.  Starting from a weak likelihood
    lets the dictionary update pick up signal before the linear stage
    trusts the measurements enough to interpolate them.
    """
    weak = 1.0 / max(float(np.var(_observed_values(data))), 1e-12)
    model = data.model
    return ProblemModel(dims=model.dims, dictionary=model.dictionary,
                        prior=model.prior,
                        channel=model.channel.with_gamma_w(weak))


def generate_trial(spec: ExperimentSpec, grid_index: int,
                   trial: int) -> TrialData:
    """Draw the instance for one (grid point, trial) cell of a sweep."""
    grid_value = spec.grid[grid_index]
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.seed, grid_index, trial]))
    if spec.kind == "cs-mu":
        m = int(round(grid_value * spec.n))
        return gen_cs_mu(spec, rng, m=m)
    if spec.kind == "self-cal":
        n = int(round(spec.m / grid_value))
        return gen_self_cal(spec, rng, n=n)
    l = int(round(grid_value))
    return gen_dict_learn(spec, rng, l=l)


def run_trial(spec: ExperimentSpec, grid_index: int, trial: int):
    """Run one cell; returns ``(TrialResult, iteration rows)``.

    Rows are ``(iter, metric_name, value)`` tuples covering every metric at
    every completed iteration, ending with a 0/1 ``diverged`` row.
    """
    data = generate_trial(spec, grid_index, trial)
    solver_seed = int(np.random.SeedSequence(
        [spec.seed, grid_index, trial, 1]).generate_state(1)[0])
    options = RunOptions(
        config=_solver_config(spec, data),
        seed=solver_seed,
        metrics=_metric_closures(spec, data),
        fixed_signal=data.X.copy() if spec.oracle == "fix-c" else None,
    )
    rows = []
    start = time.perf_counter()
    diverged = False
    final_metrics: dict[str, float] = {}
    try:
        result = run(_blind_model(data), data.Y, options)
        for rec in result.history:
            for name, value in rec.metrics.items():
                rows.append((rec.iteration, name, value))
        if result.history:
            final_metrics = dict(result.history[-1].metrics)
    except SolverDivergenceError:
        diverged = True
    wall = time.perf_counter() - start
    rows.append((spec.outer_iters, "diverged", 1.0 if diverged else 0.0))
    grid_value = float(spec.grid[grid_index])
    return TrialResult(grid_value=grid_value, trial=trial, diverged=diverged,
                       wall_time=wall, final_metrics=final_metrics), rows


@dataclass
class ExperimentResult:
    """All rows of a finished sweep, plus any files written."""

    spec: ExperimentSpec
    trial_results: list[TrialResult]
    rows: list[tuple]
    summary_rows: list[tuple]
    files: list[str] = field(default_factory=list)


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def summarize(spec: ExperimentSpec, rows: list[tuple]) -> list[tuple]:
    """Median over trials for each (grid_value, iter, metric) triple."""
    groups: dict[tuple, list[float]] = {}
    for grid_value, trial, iteration, name, value in rows:
        groups.setdefault((grid_value, iteration, name), []).append(value)
    summary = []
    for (grid_value, iteration, name), values in sorted(groups.items(),
                                                        key=_summary_key):
        summary.append((spec.kind, grid_value, iteration, name,
                        float(np.median(values)), len(values)))
    return summary


def _summary_key(item):
    (grid_value, iteration, name), _ = item
    return (grid_value, iteration, name)


def run_experiment(spec: ExperimentSpec, out_dir=None,
                   plots: bool = False) -> ExperimentResult:
    """Run the full sweep; optionally write trials.csv/summary.csv and plots.

    Diverged trials are recorded (a ``diverged`` row of 1) and skipped in
    the metric medians; they never abort the sweep.
    """
    all_rows = []
    trial_results = []
    for grid_index in range(len(spec.grid)):
        grid_value = float(spec.grid[grid_index])
        for trial in range(spec.trials):
            tres, rows = run_trial(spec, grid_index, trial)
            trial_results.append(tres)
            for iteration, name, value in rows:
                all_rows.append((grid_value, trial, iteration, name, value))
    summary_rows = summarize(spec, all_rows)

    result = ExperimentResult(spec=spec, trial_results=trial_results,
                              rows=all_rows, summary_rows=summary_rows)
    if out_dir is not None:
        result.files.extend(_write_csv(spec, all_rows, summary_rows, out_dir))
        if plots:
            result.files.extend(_write_plots(spec, summary_rows, out_dir))
    return result


def _write_csv(spec, rows, summary_rows, out_dir) -> list[str]:
    import os

    os.makedirs(out_dir, exist_ok=True)
    trials_path = os.path.join(out_dir, "trials.csv")
    with open(trials_path, "w", newline="\n") as fh:
        fh.write("experiment,grid_value,trial,iter,metric_name,metric_db\n")
        for grid_value, trial, iteration, name, value in rows:
            fh.write(f"{spec.kind},{_fmt(grid_value)},{trial},{iteration},"
                     f"{name},{_fmt(value)}\n")
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="\n") as fh:
        fh.write("experiment,grid_value,iter,metric_name,median_db,trials\n")
        for kind, grid_value, iteration, name, median, count in summary_rows:
            fh.write(f"{kind},{_fmt(grid_value)},{iteration},{name},"
                     f"{_fmt(median)},{count}\n")
    return [trials_path, summary_path]


def _write_plots(spec, summary_rows, out_dir) -> list[str]:
    import os

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metric_names = sorted({name for _, _, _, name, _, _ in summary_rows
                           if name != "diverged"})
    files = []
    for name in metric_names:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for grid_value in spec.grid:
            points = [(iteration, median)
                      for kind, gv, iteration, metric, median, _ in summary_rows
                      if metric == name and gv == float(grid_value)]
            points.sort()
            ax.plot([p[0] for p in points], [p[1] for p in points],
                    marker=".", label=f"grid={grid_value:g}")
        ax.set_xlabel("outer iteration")
        ax.set_ylabel(f"median {name}")
        ax.set_title(f"{spec.kind}: {name}")
        ax.grid(True, alpha=0.3)
        ax.legend()
        path = os.path.join(out_dir, f"{spec.kind}_{name}.svg")
        fig.savefig(path)
        plt.close(fig)
        files.append(path)
    return files
