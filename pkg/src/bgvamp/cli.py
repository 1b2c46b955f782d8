"""Command-line harness for the three experiment sweeps.

Each subcommand maps onto one scenario and accepts the same solver knobs.
Defaults reproduce the benchmark settings; a JSON preset file mirroring
the flags can supply any subset of them, with explicit flags taking
precedence.  Results land in ``--out`` as ``trials.csv`` and
``summary.csv`` plus optional SVG plots.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import ExperimentSpec, run_experiment

_GRID_FLAG = {"cs-mu": "sampling_rates", "self-cal": "sampling_rates",
              "dict-learn": "train_lengths"}

_DEFAULTS = {
    "cs-mu": {"bits": 1, "snr_db": 40.0, "sampling_rates": [1.0, 2.0, 3.0],
              "n": 64, "m": 64, "g": None, "k": 10,
              "trials": 11, "seed": 0, "oracle": "none", "outer_iters": 50,
              "inner1": 1, "inner2": 2, "damping": 0.8,
              "quantizer_range": "auto"},
    "self-cal": {"bits": 1, "snr_db": 40.0,
                 "sampling_rates": [0.5, 1.0, 2.0, 4.0],
                 "n": 64, "m": 128, "g": None, "k": 10,
                 "trials": 11, "seed": 0, "oracle": "none", "outer_iters": 50,
                 "inner1": 1, "inner2": 2, "damping": 0.8,
                 "quantizer_range": "auto"},
    "dict-learn": {"bits": 1, "snr_db": 40.0,
                   "train_lengths": [128.0, 256.0, 512.0],
                   "n": 64, "m": 64, "g": None, "k": 10,
                   "trials": 11, "seed": 0, "oracle": "none",
                   "outer_iters": 50, "inner1": 1, "inner2": 2,
                   "damping": 0.8, "quantizer_range": "auto"},
}


def _parse_bits(text: str):
    if text == "inf":
        return None
    return int(text)


def _parse_grid(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid value in {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("grid must contain at least one value")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bgvamp",
        description="Sparse bilinear recovery benchmarks from quantized "
                    "measurements.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in _DEFAULTS:
        p = sub.add_parser(kind, help=f"run the {kind} sweep")
        grid_flag = _GRID_FLAG[kind]
        # every flag defaults to None so presets from --config can fill in
        p.add_argument("--bits", choices=["1", "3", "5", "inf"],
                       default=None,
                       help="quantizer bit depth, or 'inf' for no quantizer")
        p.add_argument("--snr-db", type=float, default=None)
        if grid_flag == "sampling_rates":
            p.add_argument("--sampling-rates", type=_parse_grid, default=None,
                           metavar="a,b,c", help="M/N grid, comma separated")
        else:
            p.add_argument("--train-lengths", type=_parse_grid, default=None,
                           metavar="a,b,c", help="L grid, comma separated")
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--outer-iters", type=int, default=None)
        p.add_argument("--inner1", type=int, default=None)
        p.add_argument("--inner2", type=int, default=None)
        p.add_argument("--damping", type=float, default=None)
        p.add_argument("--oracle", choices=["none", "fix-b", "fix-c"],
                       default=None)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--m", type=int, default=None)
        p.add_argument("--g", type=int, default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--out", default=None, metavar="DIR",
                       help="directory for trials.csv / summary.csv")
        p.add_argument("--config", default=None, metavar="FILE",
                       help="JSON preset mirroring the flags")
        p.add_argument("--plots", action="store_true", default=None,
                       help="also write SVG plots (requires --out)")
    return parser


def _merge_settings(kind: str, args: argparse.Namespace) -> dict:
    """Layer flag values over the preset file over the built-in defaults."""
    settings = dict(_DEFAULTS[kind])
    if args.config is not None:
        with open(args.config) as fh:
            preset = json.load(fh)
        unknown = set(preset) - set(settings)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update(preset)
    for key in settings:
        if key == "bits":
            continue
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if args.bits is not None:
        settings["bits"] = _parse_bits(args.bits)
    return settings


def spec_from_settings(kind: str, settings: dict) -> ExperimentSpec:
    grid = settings[_GRID_FLAG[kind]]
    qrange = settings["quantizer_range"]
    if isinstance(qrange, list):
        qrange = tuple(qrange)
    return ExperimentSpec(
        kind=kind, grid=tuple(float(v) for v in grid), bits=settings["bits"],
        snr_db=float(settings["snr_db"]), n=settings["n"], m=settings["m"],
        g=settings["g"], k=settings["k"], trials=settings["trials"],
        seed=settings["seed"], oracle=settings["oracle"],
        outer_iters=settings["outer_iters"], inner1=settings["inner1"],
        inner2=settings["inner2"], damping=settings["damping"],
        quantizer_range=qrange)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _merge_settings(args.kind, args)
        spec = spec_from_settings(args.kind, settings)
        plots = bool(args.plots)
        if plots and args.out is None:
            raise ValueError("--plots requires --out")
        result = run_experiment(spec, out_dir=args.out, plots=plots)
        diverged = sum(t.diverged for t in result.trial_results)
        total = len(result.trial_results)
        print(f"{args.kind}: {total} trials, {diverged} diverged")
        for row in result.summary_rows:
            kind, grid_value, iteration, name, median, count = row
            if iteration == spec.outer_iters and name != "diverged":
                print(f"  grid={grid_value:g} {name}={median:.2f} dB "
                      f"(median of {count})")
        for path in result.files:
            print(f"  wrote {path}")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
