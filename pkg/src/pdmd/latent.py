"""Latent-coefficient interpolation, monolithic and partitioned.

Both variants learn discrete dynamics offline: the monolithic variant
stacks every parameter's latent trajectory into one tall state and fits
a single DMD; the partitioned variant fits one DMD per parameter.  The
parameter dependence, however, is resolved online: for each requested
instant the models are advanced, a fresh regressor is trained on the
per-parameter latent states at that instant, and the queried mu is
evaluated.  Online cost therefore grows with the number of training
parameters and requested instants, in contrast to the operator- and
triplet-interpolation strategies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import regression
from .data import SnapshotMatrix
from .dmd import DmdModel, advance, fit_dmd
from .errors import DataError
from .reduction import GlobalBasis, LatentDataset, lift

LATTICE_REL_TOL = 1e-9


@dataclass(frozen=True)
class MonolithicModel:
    """One DMD over the vertically stacked latent trajectories."""

    basis: GlobalBasis
    stacked_dmd: DmdModel
    params: np.ndarray
    block_map: tuple
    dt: float
    t0: float

    def __post_init__(self):
        stops = [stop for _, stop in self.block_map]
        starts = [start for start, _ in self.block_map]
        if starts[0] != 0 or any(
            a != b for a, b in zip(stops[:-1], starts[1:])
        ) or stops[-1] != self.stacked_dmd.modes.shape[0]:
            raise DataError("block map does not partition the stacked rows")


@dataclass(frozen=True)
class PartitionedModel:
    """One DMD per training parameter."""

    basis: GlobalBasis
    members: tuple
    params: np.ndarray
    dt: float
    t0: float

    def __post_init__(self):
        ranks = {member.rank for member in self.members}
        steps = {member.dt for member in self.members}
        starts = {member.t0 for member in self.members}
        if len(ranks) != 1 or len(steps) != 1 or len(starts) != 1:
            raise DataError("members must share rank and time lattice")


def fit_monolithic(latent: LatentDataset, stacked_rank: int | None = None) -> MonolithicModel:
    """Single DMD on the r*N_p stacked latent state.

    Default rank keeps the full stacked dimension, clipped only when the
    trajectory cannot support it (too few instants or rank-deficient
    stacked data); an explicit rank is honored strictly.
    """
    stacked = np.vstack(latent.latents)
    if stacked_rank is None:
        stacked_rank = min(stacked.shape[0], len(latent.grid) - 1)
        spectrum = np.linalg.svd(stacked[:, :-1], compute_uv=False)
        supported = int(np.sum(spectrum > 1e-10 * spectrum[0]))
        stacked_rank = min(stacked_rank, supported)
    model = fit_dmd(SnapshotMatrix(stacked, latent.grid), stacked_rank)
    rank = latent.rank
    block_map = tuple(
        (i * rank, (i + 1) * rank) for i in range(latent.n_params)
    )
    return MonolithicModel(
        basis=latent.basis,
        stacked_dmd=model,
        params=latent.params,
        block_map=block_map,
        dt=latent.grid.dt,
        t0=latent.grid.t0,
    )


def fit_partitioned(latent: LatentDataset, member_rank: int | None = None) -> PartitionedModel:
    """Independent DMD per parameter at ``member_rank`` (default: full
    latent rank)."""
    rank = member_rank if member_rank is not None else latent.rank
    members = tuple(
        fit_dmd(latent.trajectory(i), rank) for i in range(latent.n_params)
    )
    return PartitionedModel(
        basis=latent.basis,
        members=members,
        params=latent.params,
        dt=latent.grid.dt,
        t0=latent.grid.t0,
    )


def _lattice_steps(times, t0: float, dt: float) -> np.ndarray:
    steps = (np.atleast_1d(np.asarray(times, dtype=float)) - t0) / dt
    rounded = np.round(steps)
    off = np.abs(steps - rounded) > LATTICE_REL_TOL * np.maximum(1.0, np.abs(rounded))
    if np.any(off):
        raise DataError(
            f"instant {np.atleast_1d(times)[off][0]} is not on the model lattice"
        )
    if np.any(rounded < 0):
        raise DataError("requested instants precede the model's initial time")
    return rounded.astype(int)


def _latent_states_at(model, step: int) -> np.ndarray:
    """Per-parameter latent states at one lattice step (N_p x r)."""
    if isinstance(model, MonolithicModel):
        stacked = advance(model.stacked_dmd, step + 1)
        return np.vstack([stacked[a:b] for a, b in model.block_map])
    return np.vstack([advance(member, step + 1) for member in model.members])


def predict_latent(model, mu, times, spec: regression.RegressorSpec) -> np.ndarray:
    """Predicted state trajectory at mu over lattice instants.

    For every requested instant the per-parameter latent states are
    computed and a regressor is trained on them before evaluation at
    mu.  This online training is the contract of the strategy; see the
    regression fit counter for cost accounting.
    """
    if not isinstance(model, (MonolithicModel, PartitionedModel)):
        raise DataError(f"unsupported model type {type(model).__name__}")
    steps = _lattice_steps(times, model.t0, model.dt)
    n_params = model.params.shape[0]
    effective = regression.effective_spec(spec, n_params)
    columns = []
    for step in steps:
        states = _latent_states_at(model, int(step))
        regressor = regression.fit(effective, model.params, states)
        columns.append(regression.predict(regressor, mu))
    return lift(np.column_stack(columns), model.basis)
