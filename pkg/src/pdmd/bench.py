"""Scripted comparison of the four surrogates at desk scale.

Each scenario generates a seeded synthetic dataset, fits all four
algorithms on the training split restricted to a training window, and
evaluates every test parameter over both that window and the forecast
region beyond it.  Output per scenario: a table file (one row per
parameter/algorithm pair with errors, timings, and online fit counts)
and a tidy error-over-time series file.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import regression
from .data import restrict_time, split_train_test
from .errors import DataError
from .metrics import frobenius_rel_error, rmse, time_rel_error
from .pipeline import ALGORITHMS, FitOptions, fit_surrogate, predict_surrogate
from .regression import RegressorSpec
from .synth import FAMILIES, SynthSpec, generate

DEFAULT_TRAIN_FRACTION = 0.7

TABLE_COLUMNS = (
    "parameter",
    "algorithm",
    "train_error",
    "forecast_error",
    "rmse",
    "offline_seconds",
    "online_seconds",
    "online_fits",
)

_TIMING_COLUMNS = ("offline_seconds", "online_seconds")


@dataclass(frozen=True)
class Scenario:
    """One benchmark case: a dataset recipe plus a fixed protocol."""

    name: str
    synth: SynthSpec
    test_indices: tuple
    ranks: dict
    train_window: tuple | None = None
    op_rank: int | None = None
    regressor: RegressorSpec = field(default_factory=lambda: RegressorSpec("linear"))
    bag_trials: int = 1
    bag_fraction: float = 0.8

    def __post_init__(self):
        missing = [algo for algo in ALGORITHMS if algo not in self.ranks]
        if missing:
            raise DataError(
                f"scenario {self.name!r} must set a rank for every algorithm; "
                f"missing {missing}"
            )
        bad = {a: r for a, r in self.ranks.items() if int(r) < 1}
        if bad:
            raise DataError(f"scenario {self.name!r} has non-positive ranks: {bad}")
        if not self.test_indices:
            raise DataError(f"scenario {self.name!r} has no test parameters")


@dataclass(frozen=True)
class BenchmarkSuite:
    scenarios: tuple

    def __post_init__(self):
        if not self.scenarios:
            raise DataError("benchmark suite has no scenarios")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate scenario names: {names}")


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    ok: bool
    error: str = ""
    table_path: str = ""
    series_path: str = ""
    rows: tuple = ()


def default_suite() -> BenchmarkSuite:
    """Three seeded scenarios, one per synthetic family, all under
    desk-scale sizes."""
    linear = Scenario(
        name="linear-smooth",
        synth=SynthSpec(
            "linear-operator",
            n_h=12,
            n_params=18,
            param_range=(0.3, 0.7),
            n_t=120,
            dt=0.15,
            seed=11,
        ),
        test_indices=(4, 8, 13),
        ranks={algo: 12 for algo in ALGORITHMS},
    )
    modes = Scenario(
        name="exp-modes",
        synth=SynthSpec(
            "exp-modes",
            n_h=40,
            n_params=9,
            param_range=(0.2, 0.8),
            n_t=160,
            dt=0.08,
            seed=23,
        ),
        test_indices=(1, 4, 6),
        ranks={algo: 6 for algo in ALGORITHMS},
    )
    oscillator = Scenario(
        name="lifted-oscillator",
        synth=SynthSpec(
            "lifted-oscillator",
            n_h=24,
            n_params=9,
            param_range=(0.1, 0.5),
            n_t=140,
            dt=0.05,
            seed=37,
        ),
        test_indices=(2, 4, 6),
        ranks={algo: 2 for algo in ALGORITHMS},
    )
    return BenchmarkSuite((linear, modes, oscillator))


_SCENARIO_KEYS = {
    "family",
    "nh",
    "np",
    "nt",
    "dt",
    "t0",
    "noise",
    "seed",
    "param-range",
    "test-idx",
    "train-window",
    "rank",
    "rank.roi",
    "rank.rkoi",
    "rank.mono",
    "rank.part",
    "op-rank",
    "regressor",
    "rbf-shape",
    "poly-degree",
    "extrapolation",
    "bag-trials",
    "bag-fraction",
}


def _pair(text: str) -> tuple:
    parts = [float(p) for p in text.split(",") if p.strip() != ""]
    if len(parts) != 2:
        raise DataError(f"expected two comma-separated numbers, got {text!r}")
    return (parts[0], parts[1])


def _build_scenario(name: str, values: dict) -> Scenario:
    unknown = sorted(set(values) - _SCENARIO_KEYS)
    if unknown:
        raise DataError(f"scenario {name!r}: unknown keys {unknown}")
    family = values.get("family", "linear-operator")
    if family not in FAMILIES:
        raise DataError(f"scenario {name!r}: unknown family {family!r}")
    synth = SynthSpec(
        family,
        n_h=int(values.get("nh", 8)),
        n_params=int(values.get("np", 5)),
        param_range=_pair(values["param-range"]) if "param-range" in values else (0.0, 1.0),
        n_t=int(values.get("nt", 100)),
        dt=float(values.get("dt", 0.1)),
        t0=float(values.get("t0", 0.0)),
        noise_std=float(values.get("noise", 0.0)),
        seed=int(values.get("seed", 0)),
    )
    if "test-idx" not in values:
        raise DataError(f"scenario {name!r} must set test-idx")
    test_indices = tuple(int(i) for i in values["test-idx"].split(","))
    ranks = {}
    if "rank" in values:
        ranks = {algo: int(values["rank"]) for algo in ALGORITHMS}
    for algo in ALGORITHMS:
        key = f"rank.{algo}"
        if key in values:
            ranks[algo] = int(values[key])
    kind = values.get("regressor", "linear")
    shape = float(values["rbf-shape"]) if "rbf-shape" in values else None
    regressor = RegressorSpec(
        kind=kind,
        shape=shape,
        degree=int(values.get("poly-degree", 2)),
        extrapolation=values.get("extrapolation", "clamp"),
    )
    return Scenario(
        name=name,
        synth=synth,
        test_indices=test_indices,
        ranks=ranks,
        train_window=_pair(values["train-window"]) if "train-window" in values else None,
        op_rank=int(values["op-rank"]) if "op-rank" in values else None,
        regressor=regressor,
        bag_trials=int(values.get("bag-trials", 1)),
        bag_fraction=float(values.get("bag-fraction", 0.8)),
    )


def parse_suite(text: str) -> BenchmarkSuite:
    """Read a suite description: ``[scenario <name>]`` sections holding
    key=value lines, ``#`` comments allowed."""
    scenarios = []
    current_name = None
    current: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            header = line[1:-1].strip()
            if not header.startswith("scenario "):
                raise DataError(f"line {lineno}: expected [scenario <name>]")
            if current_name is not None:
                scenarios.append(_build_scenario(current_name, current))
            current_name = header[len("scenario ") :].strip()
            if not current_name:
                raise DataError(f"line {lineno}: scenario needs a name")
            current = {}
            continue
        if "=" not in line:
            raise DataError(f"line {lineno}: expected key=value, got {raw!r}")
        if current_name is None:
            raise DataError(f"line {lineno}: key=value before any [scenario] header")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in current:
            raise DataError(f"line {lineno}: duplicate key {key!r}")
        current[key] = value
    if current_name is not None:
        scenarios.append(_build_scenario(current_name, current))
    return BenchmarkSuite(tuple(scenarios))


def _default_window(grid) -> tuple:
    split = max(2, int(round(DEFAULT_TRAIN_FRACTION * len(grid))))
    split = min(split, len(grid) - 1)
    return (grid.t0, float(grid.instants[split - 1]))


def _run_scenario(scenario: Scenario, out_dir: str) -> ScenarioResult:
    dataset, _ = generate(scenario.synth)
    train_ds, test_ds = split_train_test(dataset, scenario.test_indices)
    window = scenario.train_window or _default_window(dataset.grid)
    train_fit = restrict_time(train_ds, *window)

    instants = dataset.grid.instants
    in_window = (instants >= window[0]) & (instants <= window[1])
    beyond = instants > window[1]

    rows = []
    series = ["time,value,algorithm,parameter"]
    for algorithm in ALGORITHMS:
        options = FitOptions(
            algorithm=algorithm,
            rank=scenario.ranks[algorithm],
            op_rank=scenario.op_rank if algorithm == "roi" else None,
            regressor=scenario.regressor,
            seed=scenario.synth.seed,
            bag_trials=scenario.bag_trials if algorithm == "rkoi" else 1,
            bag_fraction=scenario.bag_fraction,
        )
        fitted = fit_surrogate(train_fit, options)
        offline = fitted.metadata["offline_seconds"]
        for idx in range(test_ds.n_params):
            truth = test_ds.trajectories[idx].state
            mu = test_ds.params[idx]
            regression.reset_fit_count()
            started = time.perf_counter()
            pred = predict_surrogate(fitted.model, mu, instants, fitted.regressor)
            online = time.perf_counter() - started
            fits = regression.fit_count()
            label = ";".join(f"{v:g}" for v in np.atleast_1d(mu))
            eps = time_rel_error(truth, pred)
            forecast = (
                frobenius_rel_error(truth[:, beyond], pred[:, beyond])
                if beyond.any()
                else float("nan")
            )
            rows.append(
                {
                    "parameter": label,
                    "algorithm": algorithm,
                    "train_error": frobenius_rel_error(
                        truth[:, in_window], pred[:, in_window]
                    ),
                    "forecast_error": forecast,
                    "rmse": rmse(truth, pred),
                    "offline_seconds": offline,
                    "online_seconds": online,
                    "online_fits": fits,
                }
            )
            for t, value in zip(instants, eps):
                series.append(f"{t:.17g},{value:.17g},{algorithm},{label}")

    rows.sort(key=lambda row: (row["parameter"], ALGORITHMS.index(row["algorithm"])))
    table_path = os.path.join(out_dir, f"{scenario.name}_table.csv")
    series_path = os.path.join(out_dir, f"{scenario.name}_series.csv")
    with open(table_path, "w", encoding="utf-8") as handle:
        handle.write(",".join(TABLE_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for column in TABLE_COLUMNS:
                value = row[column]
                if column in _TIMING_COLUMNS:
                    cells.append(f"{value:.6f}")
                elif isinstance(value, float):
                    cells.append(f"{value:.10e}")
                else:
                    cells.append(str(value))
            handle.write(",".join(cells) + "\n")
    with open(series_path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(series) + "\n")
    return ScenarioResult(
        name=scenario.name,
        ok=True,
        table_path=table_path,
        series_path=series_path,
        rows=tuple(rows),
    )


def run_suite(suite: BenchmarkSuite, out_dir: str) -> list:
    """Run every scenario; failures are recorded and do not stop the
    suite."""
    os.makedirs(out_dir, exist_ok=True)
    results = []
    for scenario in suite.scenarios:
        try:
            results.append(_run_scenario(scenario, out_dir))
        except Exception as exc:  # noqa: BLE001  failures must not stop the suite
            results.append(
                ScenarioResult(name=scenario.name, ok=False, error=str(exc))
            )
    failures = [r for r in results if not r.ok]
    if failures:
        path = os.path.join(out_dir, "failures.txt")
        with open(path, "w", encoding="utf-8") as handle:
            for result in failures:
                handle.write(f"{result.name}: {result.error}\n")
    return results
