"""Operator interpolation over the parameter space.

Offline: one full-rank DMD per training parameter in latent
coordinates, the operators flattened into columns of a matrix whose
truncated SVD yields operator modes and per-parameter coefficients;
the coefficients and the initial latent states are regressed over mu.
Online: synthesize the operator at the queried mu from the regressed
coefficients, step the latent state, lift.  No regressor is fitted
online, so query cost does not grow with the number of training
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import regression
from .data import TimeGrid
from .dmd import _real_with_telemetry, fit_dmd, reconstruct
from .errors import DataError
from .linalg import eig, truncated_svd
from .reduction import GlobalBasis, LatentDataset, lift

LATTICE_REL_TOL = 1e-9


@dataclass(frozen=True)
class RoiModel:
    """Interpolatable family of latent one-step operators.

    ``op_modes`` holds the orthonormal operator modes as columns
    (column-major flattened r x r operators); ``train_residuals`` records
    each training parameter's latent DMD reconstruction error so
    downstream error bounds can be checked against fit quality.
    """

    basis: GlobalBasis
    op_modes: np.ndarray
    op_rank: int
    coeff_regressor: regression.FittedRegressor
    init_regressor: regression.FittedRegressor
    dt: float
    t0: float
    train_residuals: np.ndarray


def unfold_operator(op: np.ndarray) -> np.ndarray:
    """Flatten an r x r operator into an r^2 vector, column-major."""
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DataError(f"expected a square operator, got shape {op.shape}")
    return op.flatten(order="F")


def fold_operator(vec: np.ndarray) -> np.ndarray:
    """Inverse of unfold_operator."""
    vec = np.asarray(vec)
    side = int(round(np.sqrt(vec.size)))
    if side * side != vec.size:
        raise DataError(f"vector of length {vec.size} is not a square operator")
    return vec.reshape((side, side), order="F")


def fit_roi(
    latent: LatentDataset,
    op_rank: int,
    spec: regression.RegressorSpec,
) -> RoiModel:
    """Train the operator-interpolation surrogate on latent trajectories."""
    if not latent.grid.is_uniform:
        raise DataError("operator interpolation requires a uniform time grid")
    rank = latent.rank
    max_op_rank = min(rank * rank, latent.n_params)
    if not 1 <= op_rank <= max_op_rank:
        raise DataError(f"op_rank {op_rank} out of range [1, {max_op_rank}]")

    operators = []
    residuals = []
    for i in range(latent.n_params):
        trajectory = latent.trajectory(i)
        model = fit_dmd(trajectory, rank)
        # rotate the reduced operator into shared latent coordinates; the
        # projection basis is square at full rank, so this is exact
        operator = model.proj_basis @ model.reduced_op @ model.proj_basis.T
        operators.append(unfold_operator(operator))
        rebuilt = reconstruct(model, latent.grid)
        residuals.append(float(np.linalg.norm(rebuilt.state - trajectory.state)))

    stacked = np.column_stack(operators)
    svd = truncated_svd(stacked, op_rank)
    coefficients = (svd.modes_u.T @ stacked).T  # N_p x r_a
    initial_states = np.vstack([lat[:, 0] for lat in latent.latents])

    effective = regression.effective_spec(spec, latent.n_params)
    coeff_regressor = regression.fit(effective, latent.params, coefficients)
    init_regressor = regression.fit(effective, latent.params, initial_states)
    return RoiModel(
        basis=latent.basis,
        op_modes=svd.modes_u,
        op_rank=op_rank,
        coeff_regressor=coeff_regressor,
        init_regressor=init_regressor,
        dt=latent.grid.dt,
        t0=latent.grid.t0,
        train_residuals=np.asarray(residuals),
    )


def synthesize_operator(model: RoiModel, mu) -> np.ndarray:
    """Latent one-step operator at mu from the regressed coefficients."""
    coeffs = regression.predict(model.coeff_regressor, mu)
    return fold_operator(model.op_modes @ coeffs)


def _lattice_steps(instants, t0: float, dt: float) -> np.ndarray:
    steps = (np.asarray(instants, dtype=float) - t0) / dt
    rounded = np.round(steps)
    off = np.abs(steps - rounded) > LATTICE_REL_TOL * np.maximum(1.0, np.abs(rounded))
    if np.any(off):
        raise DataError(
            f"instant {np.asarray(instants)[off][0]} is not on the model lattice"
        )
    if np.any(rounded < 0):
        raise DataError("requested instants precede the model's initial time")
    return rounded.astype(int)


def predict_roi(
    model: RoiModel,
    mu,
    grid: TimeGrid,
    spectral: bool = False,
) -> np.ndarray:
    """Predicted state trajectory at mu over the given lattice instants.

    Default stepping is repeated multiplication of the synthesized
    operator; ``spectral`` switches to eigendecomposition powers, which
    is cheaper for long horizons but assumes a diagonalizable operator.
    """
    steps = _lattice_steps(grid.instants, model.t0, model.dt)
    operator = synthesize_operator(model, mu)
    v0 = regression.predict(model.init_regressor, mu)
    rank = v0.shape[0]

    if spectral:
        decomp = eig(operator)
        weights = np.linalg.solve(decomp.eigenvectors, v0.astype(complex))
        powers = decomp.eigenvalues[None, :] ** steps[:, None]
        latent = _real_with_telemetry(
            (decomp.eigenvectors * weights) @ powers.T, "predict_roi"
        )
    else:
        latent = np.empty((rank, steps.size))
        state = v0
        current = 0
        for position in np.argsort(steps):
            while current < steps[position]:
                state = operator @ state
                current += 1
            latent[:, position] = state
    return lift(latent, model.basis)
