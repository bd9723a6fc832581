"""Offline/online workflow shared by the CLI and the benchmark runner.

Keeps the fit/predict/evaluate plumbing in one place so that command
line runs and scripted benchmarks exercise identical code paths.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import regression
from .data import ParametricDataset, TimeGrid
from .errors import DataError
from .latent import (
    MonolithicModel,
    PartitionedModel,
    fit_monolithic,
    fit_partitioned,
    predict_latent,
)
from .linalg import select_rank
from .metrics import EvalReport, PhaseTimer, frobenius_rel_error, rmse, time_rel_error
from .reduction import fit_global_basis, project, stack_snapshots
from .regression import RegressorSpec
from .rkoi import RkoiModel, fit_rkoi, predict_rkoi
from .roi import RoiModel, fit_roi, predict_roi

ALGORITHMS = ("roi", "rkoi", "mono", "part")
DEFAULT_ENERGY = 0.9999


@dataclass(frozen=True)
class FitOptions:
    """Everything needed to train one surrogate on one dataset."""

    algorithm: str
    rank: int | None = None
    energy: float | None = None
    op_rank: int | None = None
    regressor: RegressorSpec | None = None
    randomized: bool = False
    oversample: int = 10
    power_iters: int = 2
    seed: int = 0
    bag_trials: int = 1
    bag_fraction: float = 0.8

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise DataError(
                f"unknown algorithm {self.algorithm!r}; use one of {ALGORITHMS}"
            )
        if self.rank is not None and self.rank < 1:
            raise DataError(f"rank must be >= 1, got {self.rank}")
        if self.energy is not None and not 0 < self.energy <= 1:
            raise DataError(f"energy must lie in (0, 1], got {self.energy}")


@dataclass(frozen=True)
class FittedSurrogate:
    """A trained model plus the context needed to query and archive it."""

    model: object
    algorithm: str
    regressor: RegressorSpec
    timer: PhaseTimer
    train_errors: np.ndarray
    metadata: dict = field(default_factory=dict)


def subset_params(dataset: ParametricDataset, indices) -> ParametricDataset:
    """Keep only the listed parameter values, in the given order."""
    indices = [int(i) for i in indices]
    if len(set(indices)) != len(indices):
        raise DataError("duplicate parameter indices")
    if any(i < 0 or i >= dataset.n_params for i in indices):
        raise DataError(
            f"parameter indices outside the dataset range [0, {dataset.n_params})"
        )
    return ParametricDataset(
        dataset.params[indices],
        tuple(dataset.trajectories[i] for i in indices),
    )


def resolve_rank(dataset: ParametricDataset, options: FitOptions) -> int:
    """Explicit rank wins; otherwise the smallest rank capturing the
    requested (or default) energy fraction of the stacked snapshots."""
    stacked = stack_snapshots(dataset)
    max_rank = min(stacked.shape)
    if options.rank is not None:
        if options.rank > max_rank:
            raise DataError(
                f"rank {options.rank} exceeds the data limit {max_rank}"
            )
        return options.rank
    singular_values = np.linalg.svd(stacked, compute_uv=False)
    energy = DEFAULT_ENERGY if options.energy is None else options.energy
    return select_rank(singular_values, energy, max_rank)


def fit_surrogate(dataset: ParametricDataset, options: FitOptions) -> FittedSurrogate:
    """Run the full offline pipeline: basis, projection, algorithm fit."""
    spec = options.regressor
    if spec is None:
        spec = regression.default_spec(dataset.param_dim)
    timer = PhaseTimer()
    with timer.phase("basis"):
        rank = resolve_rank(dataset, options)
        basis = fit_global_basis(
            dataset,
            rank,
            randomized=options.randomized,
            seed=options.seed,
            oversample=options.oversample,
            power_iters=options.power_iters,
        )
        latent = project(dataset, basis)
    with timer.phase("train"):
        if options.algorithm == "roi":
            op_rank = options.op_rank
            if op_rank is None:
                op_rank = min(rank * rank, dataset.n_params)
            model = fit_roi(latent, op_rank=op_rank, spec=spec)
        elif options.algorithm == "rkoi":
            model = fit_rkoi(
                latent,
                spec=spec,
                bag_trials=options.bag_trials,
                bag_fraction=options.bag_fraction,
                bag_seed=options.seed,
            )
        elif options.algorithm == "mono":
            model = fit_monolithic(latent)
        else:
            model = fit_partitioned(latent)

    train_errors = np.array(
        [
            frobenius_rel_error(
                dataset.trajectories[i].state,
                predict_surrogate(
                    model, dataset.params[i], dataset.grid.instants, spec
                ),
            )
            for i in range(dataset.n_params)
        ]
    )
    metadata = {
        "algorithm": options.algorithm,
        "rank": rank,
        "dt": float(dataset.grid.dt) if dataset.grid.is_uniform else 0.0,
        "t0": float(dataset.grid.t0),
        "n_t": len(dataset.grid),
        "param_dim": dataset.param_dim,
        "regressor": spec.kind,
        "rbf_shape": spec.shape,
        "poly_degree": spec.degree,
        "ridge": spec.ridge,
        "extrapolation": spec.extrapolation,
        "offline_seconds": timer.seconds("basis") + timer.seconds("train"),
        "basis_seconds": timer.seconds("basis"),
        "train_seconds": timer.seconds("train"),
        "mean_train_error": float(train_errors.mean()),
    }
    return FittedSurrogate(model, options.algorithm, spec, timer, train_errors, metadata)


def spec_from_metadata(metadata: dict) -> RegressorSpec:
    """Rebuild the regressor configuration recorded at fit time."""
    return RegressorSpec(
        kind=metadata["regressor"],
        shape=metadata["rbf_shape"],
        degree=int(metadata["poly_degree"]),
        ridge=float(metadata["ridge"]),
        extrapolation=metadata["extrapolation"],
    )


def predict_surrogate(model, mu, instants, spec: RegressorSpec) -> np.ndarray:
    """Dispatch a query to the right algorithm; always an N_h x N_t array."""
    instants = np.atleast_1d(np.asarray(instants, dtype=float))
    if isinstance(model, RoiModel):
        return predict_roi(model, mu, TimeGrid(instants))
    if isinstance(model, RkoiModel):
        return predict_rkoi(model, mu, instants)
    if isinstance(model, (MonolithicModel, PartitionedModel)):
        return predict_latent(model, mu, instants, spec)
    raise DataError(f"cannot predict with object of type {type(model).__name__}")


def evaluate_model(
    model,
    algorithm: str,
    spec: RegressorSpec,
    rank: int,
    dataset: ParametricDataset,
    indices,
    offline_seconds: float = 0.0,
) -> list:
    """One EvalReport per requested parameter, online time measured."""
    reports = []
    for i in indices:
        i = int(i)
        if not 0 <= i < dataset.n_params:
            raise DataError(
                f"test index {i} outside the dataset range [0, {dataset.n_params})"
            )
        truth = dataset.trajectories[i].state
        started = time.perf_counter()
        regression.reset_fit_count()
        pred = predict_surrogate(
            model, dataset.params[i], dataset.grid.instants, spec
        )
        online = time.perf_counter() - started
        reports.append(
            EvalReport(
                algorithm=algorithm,
                rank=rank,
                parameter=dataset.params[i],
                frobenius_error=frobenius_rel_error(truth, pred),
                time_errors=time_rel_error(truth, pred),
                rmse=rmse(truth, pred),
                offline_seconds=offline_seconds,
                online_seconds=online,
                extras={
                    "times": [float(t) for t in dataset.grid.instants],
                    "online_fits": regression.fit_count(),
                },
            )
        )
    return reports
