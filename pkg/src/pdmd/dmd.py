"""Dynamic mode decomposition on uniformly sampled trajectories.

The fit projects the one-step advancement operator onto the leading
left-singular subspace of the first N_t - 1 snapshots, takes its
eigendecomposition, lifts the eigenvectors back to state space and
solves a small least-squares problem for the mode amplitudes.  A fitted
model advances in time spectrally: state(t1 + (k-1) dt) ~= sum_j
phi_j lambda_j^(k-1) b_j.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import SnapshotMatrix, TimeGrid
from .errors import DataError, ImaginaryResidualWarning, NumericalError
from .linalg import DEFAULT_PINV_CUTOFF, eig, truncated_svd

EXACT_OPERATOR_MAX_DIM = 512
LATTICE_REL_TOL = 1e-9
IMAG_RESIDUAL_REL_TOL = 1e-6


@dataclass(frozen=True)
class DmdModel:
    """Rank-r spectral surrogate of a linear one-step advancement.

    ``reduced_op`` is the operator projected onto ``proj_basis``;
    ``eigenvalues`` are discrete-time (one application per ``dt``);
    ``modes`` live in the fit space (full state or latent coordinates).
    """

    rank: int
    reduced_op: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray
    amplitudes: np.ndarray
    dt: float
    t0: float
    proj_basis: np.ndarray
    reduced_eigvecs: np.ndarray


def _real_with_telemetry(values, context):
    values = np.asarray(values)
    scale = np.linalg.norm(values.real)
    imag = np.linalg.norm(values.imag)
    if imag > IMAG_RESIDUAL_REL_TOL * max(scale, 1e-300):
        warnings.warn(
            f"{context}: imaginary residual {imag:.3e} vs magnitude {scale:.3e}",
            ImaginaryResidualWarning,
            stacklevel=3,
        )
    return values.real


def fit_dmd(x: SnapshotMatrix, rank: int) -> DmdModel:
    """Fit a rank-``rank`` model to a uniformly sampled trajectory."""
    if not x.grid.is_uniform:
        raise DataError("basic DMD requires a uniform time grid")
    if x.n_instants < 3:
        raise DataError("need at least three snapshots to fit")
    max_rank = min(x.n_state, x.n_instants - 1)
    if not 1 <= rank <= max_rank:
        raise DataError(f"rank {rank} out of range [1, {max_rank}]")

    before = x.state[:, :-1]
    after = x.state[:, 1:]
    svd = truncated_svd(before, rank)
    s = svd.singular_values
    if s[-1] < DEFAULT_PINV_CUTOFF * s[0]:
        raise NumericalError(
            f"singular value {s[-1]:.3e} below cutoff at rank {rank}; "
            "reduce the rank"
        )
    # after @ V / Sigma appears in both the reduced operator and the modes
    propagated = after @ (svd.right_v / s)
    reduced_op = svd.modes_u.T @ propagated
    decomp = eig(reduced_op)
    modes = propagated.astype(complex) @ decomp.eigenvectors
    amplitudes = np.linalg.lstsq(modes, x.state[:, 0].astype(complex), rcond=None)[0]
    return DmdModel(
        rank=rank,
        reduced_op=reduced_op,
        eigenvalues=decomp.eigenvalues,
        modes=modes,
        amplitudes=amplitudes,
        dt=x.grid.dt,
        t0=x.grid.t0,
        proj_basis=svd.modes_u,
        reduced_eigvecs=decomp.eigenvectors,
    )


def advance(model: DmdModel, k: int) -> np.ndarray:
    """State at lattice step ``k`` (k = 1 is the initial instant)."""
    if k < 1:
        raise DataError(f"step index must be >= 1, got {k}")
    state = model.modes @ (model.eigenvalues ** (k - 1) * model.amplitudes)
    return _real_with_telemetry(state, "advance")


def reconstruct(model: DmdModel, grid: TimeGrid) -> SnapshotMatrix:
    """Evaluate the model on every instant of ``grid``.

    Instants must sit on the model's lattice t0 + (k-1) dt for integer
    k >= 1; the lattice extends beyond the training window, so the same
    call handles reconstruction and forecasting.
    """
    steps = (grid.instants - model.t0) / model.dt
    rounded = np.round(steps)
    if np.any(np.abs(steps - rounded) > LATTICE_REL_TOL * np.maximum(1.0, np.abs(rounded))):
        worst = grid.instants[np.argmax(np.abs(steps - rounded))]
        raise DataError(f"instant {worst} is not on the model lattice")
    if np.any(rounded < 0):
        raise DataError("grid starts before the model's initial instant")
    powers = model.eigenvalues[None, :] ** rounded[:, None]
    states = (model.modes * model.amplitudes) @ powers.T
    return SnapshotMatrix(_real_with_telemetry(states, "reconstruct"), grid)


def exact_operator(x: SnapshotMatrix) -> np.ndarray:
    """Full one-step operator ``after @ pinv(before)``.

    Quadratic in the state dimension, so guarded to small problems; used
    as an oracle against the reduced path.
    """
    if x.n_state > EXACT_OPERATOR_MAX_DIM:
        raise DataError(
            f"state dimension {x.n_state} exceeds the exact-operator guard "
            f"({EXACT_OPERATOR_MAX_DIM})"
        )
    if x.n_instants < 3:
        raise DataError("need at least three snapshots")
    return x.state[:, 1:] @ np.linalg.pinv(x.state[:, :-1])
