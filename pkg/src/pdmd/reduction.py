"""Shared spatial compression for parametric snapshot sets.

All trajectories are stacked side by side, one truncated SVD yields a
single basis of dominant spatial structures, and each trajectory is
projected onto it.  Every parametric surrogate in the package works in
these latent coordinates and lifts back through the same basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ParametricDataset, SnapshotMatrix, TimeGrid
from .errors import DataError
from .linalg import (
    DEFAULT_OVERSAMPLE,
    DEFAULT_POWER_ITERS,
    randomized_svd,
    truncated_svd,
)

ORTHONORMALITY_TOL = 1e-10


@dataclass(frozen=True)
class GlobalBasis:
    """Orthonormal spatial modes shared by all parameters.

    ``energy_captured`` is the cumulative squared-singular-value ratio
    at the truncation rank.  ``mean`` holds the subtracted column mean
    when centering was requested, else None.
    """

    modes_u: np.ndarray
    singular_values: np.ndarray
    energy_captured: float
    mean: np.ndarray | None = None

    def __post_init__(self):
        gram = self.modes_u.T @ self.modes_u
        if np.max(np.abs(gram - np.eye(self.rank))) > ORTHONORMALITY_TOL:
            raise DataError("basis columns are not orthonormal")
        if not 0 < self.energy_captured <= 1 + 1e-12:
            raise DataError(f"energy captured {self.energy_captured} out of (0, 1]")

    @property
    def rank(self) -> int:
        return self.modes_u.shape[1]

    @property
    def n_state(self) -> int:
        return self.modes_u.shape[0]


@dataclass(frozen=True)
class LatentDataset:
    """Per-parameter latent trajectories in a shared basis."""

    basis: GlobalBasis
    params: np.ndarray
    latents: tuple
    grid: TimeGrid

    def __post_init__(self):
        rank = self.basis.rank
        for latent in self.latents:
            if latent.shape != (rank, len(self.grid)):
                raise DataError(
                    f"latent block shape {latent.shape} does not match "
                    f"(rank, N_t) = ({rank}, {len(self.grid)})"
                )
        if self.params.shape[0] != len(self.latents):
            raise DataError("one latent block per parameter required")

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.rank

    def trajectory(self, index: int) -> SnapshotMatrix:
        return SnapshotMatrix(self.latents[index], self.grid)


def stack_snapshots(dataset: ParametricDataset) -> np.ndarray:
    """All trajectories side by side: N_h x (N_t * N_p), parameter blocks
    in dataset order, time-ordered within each block."""
    return np.hstack(dataset.states())


def fit_global_basis(
    dataset: ParametricDataset,
    rank: int,
    randomized: bool = False,
    seed: int = 0,
    oversample: int = DEFAULT_OVERSAMPLE,
    power_iters: int = DEFAULT_POWER_ITERS,
    center: bool = False,
) -> GlobalBasis:
    """Truncated SVD of the stacked snapshots.

    The deterministic path is exact; the randomized path trades a small
    spectral error for speed on wide stacks and is reproducible for a
    fixed seed.  ``center`` subtracts the global column mean first
    (default off: the leading mode then captures the mean field).
    """
    stacked = stack_snapshots(dataset)
    mean = None
    if center:
        mean = stacked.mean(axis=1, keepdims=True)
        stacked = stacked - mean
    max_rank = min(stacked.shape)
    if not 1 <= rank <= max_rank:
        raise DataError(f"rank {rank} out of range [1, {max_rank}]")
    if randomized:
        svd = randomized_svd(
            stacked, rank, oversample=oversample, power_iters=power_iters, seed=seed
        )
    else:
        svd = truncated_svd(stacked, rank)
    total = float(np.linalg.norm(stacked) ** 2)
    if total == 0:
        raise DataError("cannot build a basis from all-zero snapshots")
    energy = min(float(np.sum(svd.singular_values**2) / total), 1.0)
    return GlobalBasis(svd.modes_u, svd.singular_values, energy, mean)


def project(dataset: ParametricDataset, basis: GlobalBasis) -> LatentDataset:
    """Latent trajectories: basis transpose applied to each state block."""
    if basis.n_state != dataset.n_state:
        raise DataError(
            f"basis rows ({basis.n_state}) do not match state "
            f"dimension ({dataset.n_state})"
        )
    mean = basis.mean if basis.mean is not None else 0.0
    latents = tuple(
        basis.modes_u.T @ (traj.state - mean) for traj in dataset.trajectories
    )
    return LatentDataset(basis, dataset.params, latents, dataset.grid)


def lift(latent: np.ndarray, basis: GlobalBasis) -> np.ndarray:
    """Back to state space: modes times latent (plus the mean if centered)."""
    latent = np.asarray(latent)
    if latent.ndim != 2 or latent.shape[0] != basis.rank:
        raise DataError(
            f"latent rows ({latent.shape[0] if latent.ndim == 2 else latent.ndim}) "
            f"do not match basis rank ({basis.rank})"
        )
    lifted = basis.modes_u @ latent
    if basis.mean is not None:
        lifted = lifted + basis.mean
    return lifted
