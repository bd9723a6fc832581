"""Tests for parametric stacking and the shared spatial basis."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pdmd.data import ParametricDataset, SnapshotMatrix, TimeGrid
from pdmd.errors import DataError
from pdmd.reduction import fit_global_basis, lift, project, stack_snapshots


def make_dataset(n_params=3, n_state=8, n_t=5, seed=0):
    rng = np.random.default_rng(seed)
    grid = TimeGrid(np.linspace(0.0, 1.0, n_t))
    params = np.arange(n_params, dtype=float)[:, None]
    trajectories = tuple(
        SnapshotMatrix(rng.standard_normal((n_state, n_t)), grid)
        for _ in range(n_params)
    )
    return ParametricDataset(params, trajectories)


def subspace_dataset(n_params=4, n_state=10, n_t=6, dim=3, seed=1):
    """Trajectories confined to a fixed dim-dimensional subspace."""
    rng = np.random.default_rng(seed)
    span, _ = np.linalg.qr(rng.standard_normal((n_state, dim)))
    grid = TimeGrid(np.linspace(0.0, 1.0, n_t))
    params = np.arange(n_params, dtype=float)[:, None]
    trajectories = tuple(
        SnapshotMatrix(span @ rng.standard_normal((dim, n_t)), grid)
        for _ in range(n_params)
    )
    return ParametricDataset(params, trajectories), span


class TestStack:
    def test_block_order(self):
        ds = make_dataset(n_params=2, n_t=3)
        stacked = stack_snapshots(ds)
        assert stacked.shape == (8, 6)
        assert_allclose(stacked[:, :3], ds.trajectories[0].state)
        assert_allclose(stacked[:, 3:], ds.trajectories[1].state)

    def test_single_parameter(self):
        ds = make_dataset(n_params=1)
        assert_allclose(stack_snapshots(ds), ds.trajectories[0].state)

    def test_column_index_oracle(self):
        ds = make_dataset(n_params=3, n_t=5, seed=7)
        stacked = stack_snapshots(ds)
        rng = np.random.default_rng(2)
        for _ in range(10):
            i = rng.integers(3)
            k = rng.integers(5)
            assert_allclose(stacked[:, i * 5 + k], ds.trajectories[i].state[:, k])


class TestFitGlobalBasis:
    def test_subspace_captured(self):
        ds, span = subspace_dataset()
        basis = fit_global_basis(ds, rank=3)
        stacked = stack_snapshots(ds)
        residual = stacked - basis.modes_u @ (basis.modes_u.T @ stacked)
        assert np.linalg.norm(residual) <= 1e-10
        assert basis.energy_captured == pytest.approx(1.0, abs=1e-12)

    def test_full_rank_energy_is_one(self):
        ds = make_dataset(n_params=2, n_state=4, n_t=3)
        basis = fit_global_basis(ds, rank=4)
        assert basis.energy_captured == pytest.approx(1.0, abs=1e-12)

    def test_orthonormal_columns(self):
        ds = make_dataset(seed=5)
        basis = fit_global_basis(ds, rank=4)
        assert_allclose(basis.modes_u.T @ basis.modes_u, np.eye(4), atol=1e-10)

    def test_truncation_residual_equals_tail(self):
        ds = make_dataset(n_params=3, n_state=6, n_t=4, seed=3)
        stacked = stack_snapshots(ds)
        s = np.linalg.svd(stacked, compute_uv=False)
        basis = fit_global_basis(ds, rank=3)
        residual = np.linalg.norm(stacked - basis.modes_u @ (basis.modes_u.T @ stacked)) ** 2
        assert_allclose(residual, np.sum(s[3:] ** 2), rtol=1e-9)

    def test_randomized_close_to_deterministic(self):
        rng = np.random.default_rng(0)
        n_state, n_t, n_params = 60, 30, 3
        grid = TimeGrid(np.linspace(0, 1, n_t))
        u, _ = np.linalg.qr(rng.standard_normal((n_state, 20)))
        trajectories = tuple(
            SnapshotMatrix(
                u @ (np.geomspace(1, 1e-8, 20)[:, None] * rng.standard_normal((20, n_t))),
                grid,
            )
            for _ in range(n_params)
        )
        ds = ParametricDataset(np.arange(3.0)[:, None], trajectories)
        det = fit_global_basis(ds, rank=5)
        rnd = fit_global_basis(ds, rank=5, randomized=True, seed=4)
        assert_allclose(rnd.singular_values, det.singular_values, rtol=1e-2)

    def test_rank_out_of_range(self):
        ds = make_dataset(n_params=2, n_state=4, n_t=3)
        with pytest.raises(DataError):
            fit_global_basis(ds, rank=7)


class TestProjectLift:
    def test_identity_basis_latents_equal_states(self):
        ds = make_dataset(n_params=2, n_state=4, n_t=6, seed=2)
        basis = fit_global_basis(ds, rank=4)
        latent = project(ds, basis)
        for i in range(2):
            assert_allclose(
                lift(latent.latents[i], basis),
                ds.trajectories[i].state,
                atol=1e-10,
            )

    def test_orthogonal_trajectory_has_zero_latent(self):
        grid = TimeGrid(np.array([0.0, 1.0, 2.0]))
        span = np.eye(6)[:, :2]
        basis_ds = ParametricDataset(
            np.array([[0.0], [1.0]]),
            (
                SnapshotMatrix(span @ np.random.default_rng(0).standard_normal((2, 3)), grid),
                SnapshotMatrix(span @ np.random.default_rng(1).standard_normal((2, 3)), grid),
            ),
        )
        basis = fit_global_basis(basis_ds, rank=2)
        orthogonal = ParametricDataset(
            np.array([[5.0]]),
            (SnapshotMatrix(np.eye(6)[:, 3:4] @ np.ones((1, 3)), grid),),
        )
        latent = project(orthogonal, basis)
        assert_allclose(latent.latents[0], 0.0, atol=1e-12)

    def test_reconstruction_error_equals_tail_energy(self):
        ds = make_dataset(n_params=3, n_state=7, n_t=5, seed=9)
        stacked = stack_snapshots(ds)
        s = np.linalg.svd(stacked, compute_uv=False)
        basis = fit_global_basis(ds, rank=4)
        latent = project(ds, basis)
        err_sq = sum(
            np.linalg.norm(lift(latent.latents[i], basis) - ds.trajectories[i].state) ** 2
            for i in range(3)
        )
        assert_allclose(err_sq, np.sum(s[4:] ** 2), rtol=1e-9)

    def test_project_lift_idempotent(self):
        ds = make_dataset(seed=11)
        basis = fit_global_basis(ds, rank=3)
        latent = project(ds, basis)
        once = lift(latent.latents[0], basis)
        grid = ds.grid
        again = project(
            ParametricDataset(np.array([[0.0]]), (SnapshotMatrix(once, grid),)),
            basis,
        )
        assert_allclose(lift(again.latents[0], basis), once, atol=1e-10)

    def test_lift_preserves_column_norms(self):
        ds = make_dataset(seed=4)
        basis = fit_global_basis(ds, rank=4)
        rng = np.random.default_rng(3)
        latent = rng.standard_normal((4, 6))
        lifted = lift(latent, basis)
        assert_allclose(
            np.linalg.norm(lifted, axis=0),
            np.linalg.norm(latent, axis=0),
            atol=1e-10,
        )

    def test_zero_latent_lifts_to_zero(self):
        ds = make_dataset()
        basis = fit_global_basis(ds, rank=2)
        assert_allclose(lift(np.zeros((2, 4)), basis), 0.0, atol=1e-15)

    def test_reconstruction_invariant_to_basis_rotation(self):
        from pdmd.reduction import GlobalBasis

        ds = make_dataset(n_params=2, n_state=6, n_t=5, seed=8)
        basis = fit_global_basis(ds, rank=3)
        rng = np.random.default_rng(12)
        rot, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        rotated = GlobalBasis(
            basis.modes_u @ rot, basis.singular_values, basis.energy_captured
        )
        for original, mixed in zip(
            project(ds, basis).latents, project(ds, rotated).latents
        ):
            assert_allclose(
                lift(original, basis), lift(mixed, rotated), atol=1e-10
            )

    def test_dimension_mismatch(self):
        ds = make_dataset(n_state=8)
        basis = fit_global_basis(ds, rank=2)
        other = make_dataset(n_state=5)
        with pytest.raises(DataError):
            project(other, basis)
        with pytest.raises(DataError):
            lift(np.zeros((3, 4)), basis)

    def test_centered_round_trip(self):
        ds = make_dataset(n_params=2, n_state=4, n_t=6, seed=13)
        basis = fit_global_basis(ds, rank=4, center=True)
        latent = project(ds, basis)
        for i in range(2):
            assert_allclose(
                lift(latent.latents[i], basis),
                ds.trajectories[i].state,
                atol=1e-10,
            )
