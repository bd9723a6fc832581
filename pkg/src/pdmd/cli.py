"""Command-line front end.

Subcommands: synth, fit, predict, eval, plotdata, bench.  Every flag
has a config-file equivalent (plain ``key=value`` lines, ``#``
comments); explicit flags override file values.  Exit codes: 0
success, 2 usage, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import bench, regression
from .archive import load_model, save_model
from .data import (
    ParametricDataset,
    SnapshotMatrix,
    TimeGrid,
    read_dataset,
    restrict_time,
    write_dataset,
)
from .errors import DataError, NumericalError
from .metrics import report_from_line, report_to_line
from .pipeline import (
    ALGORITHMS,
    FitOptions,
    evaluate_model,
    fit_surrogate,
    predict_surrogate,
    spec_from_metadata,
    subset_params,
)
from .regression import RegressorSpec
from .synth import FAMILIES, SynthSpec, generate, spec_to_json

FAMILY_ALIASES = {
    "linear": "linear-operator",
    "modes": "exp-modes",
    "oscillator": "lifted-oscillator",
}
REGRESSOR_KINDS = ("linear", "nearest", "rbf-gauss", "rbf-tps", "poly")
EXTRAPOLATIONS = ("clamp", "allow", "error")

_THREAD_LIMIT_HANDLE = None


class UsageError(Exception):
    """Bad flags, config keys, or option combinations."""


def _parse_uint(text, minimum=0, name="value"):
    try:
        value = int(text)
    except ValueError as exc:
        raise ValueError(f"{name} must be an integer, got {text!r}") from exc
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def _parse_float(text, name="value"):
    try:
        return float(text)
    except ValueError as exc:
        raise ValueError(f"{name} must be a number, got {text!r}") from exc


def _parse_float_list(text):
    parts = [p for p in text.split(",") if p.strip() != ""]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return [_parse_float(p) for p in parts]


def _parse_int_list(text):
    parts = [p for p in text.split(",") if p.strip() != ""]
    if not parts:
        raise ValueError("expected a comma-separated list of indices")
    return [_parse_uint(p, name="index") for p in parts]


def _parse_pair(text):
    values = _parse_float_list(text)
    if len(values) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {text!r}")
    return (values[0], values[1])


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_family(text):
    name = FAMILY_ALIASES.get(text, text)
    if name not in FAMILIES:
        raise ValueError(
            f"unknown family {text!r}; use one of {FAMILIES} "
            f"(aliases: {sorted(FAMILY_ALIASES)})"
        )
    return name


def _parse_choice(choices, name):
    def convert(text):
        if text not in choices:
            raise ValueError(f"{name} must be one of {choices}, got {text!r}")
        return text

    return convert


def _parse_paths(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return parts


@dataclass(frozen=True)
class Option:
    """One CLI option with its config-file twin."""

    name: str
    parse: object
    default: object = None
    help: str = ""
    flag: bool = False
    repeat: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


def _opt_uint(name, minimum, default=None, help=""):
    return Option(name, lambda t: _parse_uint(t, minimum, name), default, help)


def _opt_float(name, default=None, help=""):
    return Option(name, lambda t: _parse_float(t, name), default, help)


COMMON = [
    Option("threads", lambda t: _parse_uint(t, 1, "threads"), None,
           "BLAS thread cap (env PDMD_THREADS, then core count)"),
    Option("seed", lambda t: _parse_uint(t, 0, "seed"), 0, "random seed"),
]

SYNTH_OPTS = COMMON + [
    Option("family", _parse_family, "linear-operator",
           "dataset family (linear-operator, exp-modes, lifted-oscillator)"),
    _opt_uint("nh", 1, 8, "state dimension"),
    _opt_uint("np", 1, 5, "number of parameter values"),
    _opt_uint("nt", 2, 100, "number of time instants"),
    _opt_float("dt", 0.1, "time step"),
    _opt_float("t0", 0.0, "first instant"),
    _opt_float("noise", 0.0, "gaussian noise standard deviation"),
    Option("param-range", _parse_pair, (0.0, 1.0), "lo,hi parameter interval"),
    Option("out", str, "synth.pdmd1", "output dataset path"),
]

FIT_OPTS = COMMON + [
    Option("data", str, None, "training dataset path"),
    Option("algorithm", _parse_choice(ALGORITHMS, "algorithm"), None,
           "surrogate algorithm (roi, rkoi, mono, part)"),
    _opt_uint("rank", 1, None, "latent rank (default: from --energy)"),
    _opt_float("energy", None, "energy fraction for automatic rank selection"),
    _opt_uint("op-rank", 1, None, "operator-space rank (roi only)"),
    Option("regressor", _parse_choice(REGRESSOR_KINDS, "regressor"), None,
           "parameter-space regressor kind"),
    _opt_float("rbf-shape", None, "radial basis shape parameter"),
    _opt_uint("poly-degree", 1, 2, "polynomial regressor degree"),
    Option("extrapolation", _parse_choice(EXTRAPOLATIONS, "extrapolation"),
           "clamp", "out-of-hull query policy"),
    Option("train-idx", _parse_int_list, None,
           "parameter indices used for training (default: all)"),
    Option("time-window", _parse_pair, None, "training window lo,hi"),
    Option("randomized-svd", _parse_bool, False,
           "randomized range finder for the basis", flag=True),
    _opt_uint("oversample", 0, 10, "randomized SVD oversampling"),
    _opt_uint("power-iters", 0, 2, "randomized SVD power iterations"),
    _opt_uint("bag-trials", 1, 1, "bagging trials for rkoi members"),
    _opt_float("bag-fraction", 0.8, "time-subset fraction per bagging trial"),
    Option("out", str, "model.pdmdm", "output model path"),
]

PREDICT_OPTS = COMMON + [
    Option("model", str, None, "model archive path"),
    Option("mu", _parse_float_list, None, "query parameter (comma-separated)"),
    Option("time-window", _parse_pair, None,
           "prediction window lo,hi (default: training window)"),
    _opt_uint("nt", 2, None,
              "number of evenly spaced instants (default: model lattice)"),
    Option("out", str, "prediction.pdmd1", "output dataset path"),
]

EVAL_OPTS = COMMON + [
    Option("model", str, None, "model archive path (repeatable)", repeat=True),
    Option("data", str, None, "truth dataset path"),
    Option("test-idx", _parse_int_list, None,
           "parameter indices to evaluate (default: all)"),
    Option("time-window", _parse_pair, None, "evaluation window lo,hi"),
    Option("out", str, "report.jsonl", "evaluation report path"),
]

PLOTDATA_OPTS = [
    Option("report", str, None, "evaluation report path (repeatable)",
           repeat=True),
    Option("out", str, "plot.csv", "output series path"),
]

BENCH_OPTS = COMMON + [
    Option("suite", str, None, "suite description file (default: built-in)"),
    Option("out", str, "bench_out", "report directory"),
]


def _add_options(parser: argparse.ArgumentParser, options) -> None:
    parser.add_argument("--config", type=str, default=None,
                        help="key=value config file; flags override")
    for opt in options:
        if opt.flag:
            parser.add_argument(f"--{opt.name}", dest=opt.dest,
                                action="store_const", const=True,
                                default=None, help=opt.help)
        elif opt.repeat:
            parser.add_argument(f"--{opt.name}", dest=opt.dest, type=opt.parse,
                                action="append", default=None, help=opt.help)
        else:
            parser.add_argument(f"--{opt.name}", dest=opt.dest, type=opt.parse,
                                default=None, help=opt.help)


def _read_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in values:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _merge_config(args: argparse.Namespace, options) -> None:
    """Fill unset options from the config file, then from defaults."""
    file_values = _read_config(args.config) if args.config else {}
    known = {opt.name: opt for opt in options}
    unknown = sorted(set(file_values) - set(known))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for opt in options:
        current = getattr(args, opt.dest)
        if current is not None:
            continue
        if opt.name in file_values:
            try:
                if opt.flag:
                    value = _parse_bool(file_values[opt.name])
                elif opt.repeat:
                    value = [opt.parse(p) for p in _parse_paths(file_values[opt.name])]
                else:
                    value = opt.parse(file_values[opt.name])
            except ValueError as exc:
                raise UsageError(f"config key {opt.name!r}: {exc}") from exc
            setattr(args, opt.dest, value)
        else:
            setattr(args, opt.dest, opt.default)


def _require(args, dest, flag):
    value = getattr(args, dest)
    if value is None:
        raise UsageError(f"--{flag} is required")
    return value


def _apply_threads(requested) -> int:
    """Resolve the thread cap (flag, env, cores) and apply it to the
    numeric libraries; 1 gives bit-reproducible runs."""
    global _THREAD_LIMIT_HANDLE
    if requested is None:
        env = os.environ.get("PDMD_THREADS")
        if env is not None:
            try:
                requested = _parse_uint(env, 1, "PDMD_THREADS")
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
        else:
            requested = os.cpu_count() or 1
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(requested)
    try:
        import threadpoolctl

        _THREAD_LIMIT_HANDLE = threadpoolctl.threadpool_limits(limits=requested)
    except ImportError:
        pass
    return requested


def _build_regressor_spec(args, param_dim: int) -> RegressorSpec:
    if args.regressor is None:
        return regression.default_spec(param_dim, extrapolation=args.extrapolation)
    return RegressorSpec(
        kind=args.regressor,
        shape=args.rbf_shape,
        degree=args.poly_degree,
        extrapolation=args.extrapolation,
    )


def cmd_synth(args) -> int:
    spec = SynthSpec(
        family=args.family,
        n_h=args.nh,
        n_params=args.np,
        param_range=args.param_range,
        n_t=args.nt,
        dt=args.dt,
        t0=args.t0,
        noise_std=args.noise,
        seed=args.seed,
    )
    dataset, _ = generate(spec)
    write_dataset(dataset, args.out)
    sidecar = args.out + ".spec.json"
    with open(sidecar, "w", encoding="utf-8") as handle:
        handle.write(spec_to_json(spec) + "\n")
    print(f"wrote {args.out} ({dataset.n_params} parameters, "
          f"{dataset.n_state} x {len(dataset.grid)} snapshots)")
    print(f"wrote {sidecar}")
    return 0


def cmd_fit(args) -> int:
    data_path = _require(args, "data", "data")
    algorithm = _require(args, "algorithm", "algorithm")
    dataset = read_dataset(data_path)
    if args.train_idx is not None:
        dataset = subset_params(dataset, args.train_idx)
    if args.time_window is not None:
        dataset = restrict_time(dataset, *args.time_window)
    print(f"training parameters: {dataset.n_params}")
    print(f"training columns: {len(dataset.grid)}")

    spec = _build_regressor_spec(args, dataset.param_dim)
    options = FitOptions(
        algorithm=algorithm,
        rank=args.rank,
        energy=args.energy,
        op_rank=args.op_rank,
        regressor=spec,
        randomized=args.randomized_svd,
        oversample=args.oversample,
        power_iters=args.power_iters,
        seed=args.seed,
        bag_trials=args.bag_trials,
        bag_fraction=args.bag_fraction,
    )
    fitted = fit_surrogate(dataset, options)
    save_model(fitted.model, args.out, metadata=fitted.metadata)
    print(f"basis rank: {fitted.metadata['rank']}")
    print(f"training error: {fitted.metadata['mean_train_error']:.6e}")
    print(f"offline seconds: {fitted.metadata['offline_seconds']:.4f} "
          f"(basis {fitted.metadata['basis_seconds']:.4f}, "
          f"train {fitted.metadata['train_seconds']:.4f})")
    print(f"wrote {args.out}")
    return 0


def _prediction_instants(args, metadata) -> np.ndarray:
    window = args.time_window
    if window is None:
        t0, dt, n_t = metadata["t0"], metadata["dt"], int(metadata["n_t"])
        if dt <= 0:
            raise DataError(
                "model trained on a non-uniform grid; give --time-window and --nt"
            )
        window = (t0, t0 + dt * (n_t - 1))
    if args.nt is not None:
        return np.linspace(window[0], window[1], args.nt)
    dt = metadata["dt"]
    if dt <= 0:
        raise DataError(
            "model trained on a non-uniform grid; give --nt to sample the window"
        )
    steps = int(np.floor((window[1] - window[0]) / dt + 1e-9)) + 1
    return window[0] + dt * np.arange(max(steps, 2))


def cmd_predict(args) -> int:
    model_path = _require(args, "model", "model")
    mu = _require(args, "mu", "mu")
    archive = load_model(model_path)
    if len(mu) != int(archive.metadata.get("param_dim", len(mu))):
        raise DataError(
            f"query parameter has {len(mu)} components; the model expects "
            f"{archive.metadata['param_dim']}"
        )
    instants = _prediction_instants(args, archive.metadata)
    spec = spec_from_metadata(archive.metadata)

    regression.reset_fit_count()
    started = time.perf_counter()
    states = predict_surrogate(archive.model, mu, instants, spec)
    online = time.perf_counter() - started
    fits = regression.fit_count()

    grid = TimeGrid(instants)
    prediction = ParametricDataset(
        np.asarray(mu, dtype=float)[None, :],
        (SnapshotMatrix(states, grid),),
    )
    write_dataset(prediction, args.out)
    print(f"online seconds: {online:.6f}")
    print(f"regressor fits: {fits}")
    print(f"wrote {args.out} ({states.shape[0]} x {states.shape[1]})")
    return 0


def _format_parameter(values) -> str:
    return ",".join(f"{v:g}" for v in np.atleast_1d(values))


def cmd_eval(args) -> int:
    model_paths = _require(args, "model", "model")
    data_path = _require(args, "data", "data")
    dataset = read_dataset(data_path)
    if args.time_window is not None:
        dataset = restrict_time(dataset, *args.time_window)
    indices = args.test_idx
    if indices is None:
        indices = list(range(dataset.n_params))

    reports = []
    for path in model_paths:
        archive = load_model(path)
        spec = spec_from_metadata(archive.metadata)
        reports.extend(
            evaluate_model(
                archive.model,
                archive.algorithm,
                spec,
                int(archive.metadata["rank"]),
                dataset,
                indices,
                offline_seconds=float(archive.metadata["offline_seconds"]),
            )
        )

    with open(args.out, "w", encoding="utf-8") as handle:
        for report in reports:
            handle.write(report_to_line(report) + "\n")

    header = f"{'parameter':<16} {'algorithm':<10} {'error':<12} {'time':<10}"
    print(header)
    print("-" * len(header))
    for report in reports:
        print(f"{_format_parameter(report.parameter):<16} "
              f"{report.algorithm:<10} "
              f"{report.frobenius_error:<12.4e} "
              f"{report.online_seconds:<10.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_plotdata(args) -> int:
    report_paths = args.report or []
    lines = ["time,value,algorithm,parameter"]
    for path in report_paths:
        with open(path, "r", encoding="utf-8") as handle:
            for raw in handle:
                raw = raw.strip()
                if not raw:
                    continue
                report = report_from_line(raw)
                times = report.extras.get(
                    "times", list(range(len(report.time_errors)))
                )
                label = _format_parameter(report.parameter).replace(",", ";")
                for t, value in zip(times, report.time_errors):
                    lines.append(
                        f"{t:.17g},{value:.17g},{report.algorithm},{label}"
                    )
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    print(f"wrote {args.out} ({len(lines) - 1} rows)")
    return 0


def cmd_bench(args) -> int:
    if args.suite is None:
        suite = bench.default_suite()
    else:
        with open(args.suite, "r", encoding="utf-8") as handle:
            suite = bench.parse_suite(handle.read())
    results = bench.run_suite(suite, args.out)
    failed = [r for r in results if not r.ok]
    for result in results:
        status = "ok" if result.ok else f"FAILED ({result.error})"
        print(f"scenario {result.name}: {status}")
        if result.ok:
            print(f"  table:  {result.table_path}")
            print(f"  series: {result.series_path}")
    print(f"{len(results) - len(failed)}/{len(results)} scenarios succeeded")
    return 1 if failed else 0


COMMANDS = {
    "synth": (cmd_synth, SYNTH_OPTS, "generate a synthetic dataset"),
    "fit": (cmd_fit, FIT_OPTS, "train a surrogate model"),
    "predict": (cmd_predict, PREDICT_OPTS, "query a trained model"),
    "eval": (cmd_eval, EVAL_OPTS, "error/time report against a truth dataset"),
    "plotdata": (cmd_plotdata, PLOTDATA_OPTS, "emit tidy error-series rows"),
    "bench": (cmd_bench, BENCH_OPTS, "run a benchmark suite"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdmd",
        description="Parametric spectral surrogates for snapshot data.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (handler, options, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        _add_options(sub, options)
        sub.set_defaults(handler=handler, options=options)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args, args.options)
        if hasattr(args, "threads"):
            _apply_threads(args.threads)
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
