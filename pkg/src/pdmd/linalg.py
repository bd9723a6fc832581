"""Dense matrix kernels: truncated/randomized SVD, eigendecomposition,
pseudo-inverse and energy-based rank selection.

Conventions fixed here and relied on by every model module:

* snapshots are columns, flattening is column-major;
* SVD factors are sign-normalized (largest-magnitude entry of each left
  vector made positive) so repeated factorizations are comparable;
* eigenpairs are sorted by descending eigenvalue magnitude, ties broken
  by descending imaginary part, and each eigenvector is rotated so its
  largest-magnitude entry is real and positive.  This makes spectra
  comparable across nearby operators, which parameter interpolation
  relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

DEFAULT_PINV_CUTOFF = 1e-12
DEFAULT_OVERSAMPLE = 10
DEFAULT_POWER_ITERS = 2


@dataclass(frozen=True)
class TruncatedSvd:
    """Rank-r factors ``m ~= modes_u @ diag(singular_values) @ right_v.T``."""

    modes_u: np.ndarray
    singular_values: np.ndarray
    right_v: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.modes_u * self.singular_values) @ self.right_v.T


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a square matrix; columns of ``eigenvectors`` are unit
    2-norm and phase-normalized."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_2d(m, name="matrix"):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DataError(f"{name} must be a 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{name} contains non-finite entries")
    return m


def _fix_svd_signs(u, v):
    """Flip paired column signs so each u-column's largest entry is positive."""
    lead = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[lead, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def truncated_svd(m, rank: int) -> TruncatedSvd:
    """Deterministic rank-``rank`` SVD of a real matrix.

    The returned factors are the Eckart-Young optimal rank-r approximation;
    the discarded tail energy equals ``sqrt(sum(s[rank:] ** 2))``.
    """
    m = _as_2d(m)
    if np.iscomplexobj(m):
        raise DataError("truncated_svd expects a real matrix")
    max_rank = min(m.shape)
    if not 1 <= rank <= max_rank:
        raise DataError(f"rank {rank} out of range [1, {max_rank}]")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    u, v = _fix_svd_signs(u[:, :rank], vt[:rank].T)
    return TruncatedSvd(u, s[:rank].copy(), v)


def randomized_svd(
    m,
    rank: int,
    oversample: int = DEFAULT_OVERSAMPLE,
    power_iters: int = DEFAULT_POWER_ITERS,
    seed: int = 0,
) -> TruncatedSvd:
    """Randomized range-finder SVD (Gaussian sketch, subspace iteration).

    Bit-reproducible for a fixed ``seed``.  With a couple of power
    iterations the leading singular values of matrices with fast-decaying
    spectra match the deterministic ones to within a few percent.
    """
    m = _as_2d(m)
    if np.iscomplexobj(m):
        raise DataError("randomized_svd expects a real matrix")
    n_sketch = rank + oversample
    if rank < 1 or n_sketch > min(m.shape):
        raise DataError(
            f"rank + oversample = {n_sketch} out of range [1, {min(m.shape)}]"
        )
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((m.shape[1], n_sketch))
    q, _ = np.linalg.qr(m @ omega)
    for _ in range(power_iters):
        q, _ = np.linalg.qr(m.T @ q)
        q, _ = np.linalg.qr(m @ q)
    b = q.T @ m
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    u, v = _fix_svd_signs((q @ ub)[:, :rank], vt[:rank].T)
    return TruncatedSvd(u, s[:rank].copy(), v)


def eig(m) -> EigenDecomposition:
    """Eigendecomposition with the canonical ordering and phase convention."""
    m = _as_2d(m)
    if m.shape[0] != m.shape[1]:
        raise DataError(f"eig expects a square matrix, got {m.shape}")
    try:
        values, vectors = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed: {exc}") from exc
    values, vectors = canonical_eig_order(values, vectors)
    return EigenDecomposition(values, vectors)


def canonical_eig_order(values, vectors):
    """Sort eigenpairs by (|lambda| desc, Im lambda desc) and phase-normalize.

    Each eigenvector is scaled to unit 2-norm and rotated so its
    largest-magnitude entry is real and positive.
    """
    values = np.asarray(values, dtype=complex)
    vectors = np.asarray(vectors, dtype=complex)
    order = np.lexsort((-values.imag, -np.abs(values)))
    values = values[order].copy()
    vectors = vectors[:, order].copy()
    norms = np.linalg.norm(vectors, axis=0)
    norms[norms == 0] = 1.0
    vectors /= norms
    lead = np.argmax(np.abs(vectors), axis=0)
    phases = vectors[lead, np.arange(vectors.shape[1])]
    mags = np.abs(phases)
    mags[mags == 0] = 1.0
    vectors *= (mags / phases)
    return values, vectors


def pseudo_inverse(svd: TruncatedSvd, rel_cutoff: float = DEFAULT_PINV_CUTOFF) -> np.ndarray:
    """Moore-Penrose pseudo-inverse from truncated factors.

    Singular values below ``rel_cutoff * s_max`` are treated as zero.
    """
    if not 0 < rel_cutoff < 1:
        raise DataError(f"rel_cutoff must lie in (0, 1), got {rel_cutoff}")
    s = svd.singular_values
    if s.shape[0] == 0 or s[0] <= 0:
        raise NumericalError("all singular values fall below the cutoff")
    inv = np.where(s >= rel_cutoff * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (svd.right_v * inv) @ svd.modes_u.T


def select_rank(singular_values, energy: float, max_rank: int) -> int:
    """Smallest rank capturing ``energy`` of the cumulative squared spectrum,
    clamped to ``max_rank``."""
    s = np.asarray(singular_values, dtype=float)
    if s.ndim != 1 or s.shape[0] == 0:
        raise DataError("singular values must be a non-empty 1-D array")
    if np.any(s < 0):
        raise DataError("singular values must be non-negative")
    if np.any(np.diff(s) > 0):
        raise DataError("singular values must be sorted non-increasing")
    if not 0 < energy <= 1:
        raise DataError(f"energy must lie in (0, 1], got {energy}")
    total = float(np.sum(s**2))
    if total == 0:
        raise NumericalError("all-zero singular spectrum")
    cumulative = np.cumsum(s**2) / total
    rank = int(np.searchsorted(cumulative, energy - 1e-15) + 1)
    return min(rank, max_rank, s.shape[0])
