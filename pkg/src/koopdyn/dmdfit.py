"""Low-rank operator fit from time-shifted snapshot pairs.

Pipeline: shifted pair assembly -> truncated SVD -> reduced operator ->
eigendecomposition -> mode lifting.  The full 6n x 6n operator is never
materialized; the model keeps only the complex modes, eigenvalues, and the
orthonormal left basis.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .statespace import ForceLift, LiftedState
from .errors import (
    DegenerateDataError,
    DimensionError,
    IllConditionedError,
    IllConditionedWarning,
    InsufficientDataError,
)

DEFAULT_ENERGY = 0.9999
SINGULAR_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Ordered lifted states from one trajectory plus step-size metadata.

    ``force_lifts``, when present, holds the force applied during each
    transition (length T for T+1 states); the fit augments the input columns
    with it so the learned operator models the autonomous dynamics.
    """

    states: tuple
    h: float
    rest_positions: np.ndarray | None = None
    force_lifts: tuple = ()

    def __post_init__(self):
        if self.h <= 0:
            raise DimensionError(f"step size must be positive, got {self.h}")
        if len(self.states) < 2:
            raise InsufficientDataError("need at least 2 snapshots")
        dim = self.states[0].dim
        if any(s.dim != dim for s in self.states):
            raise DimensionError("snapshots have inconsistent dimensions")
        if self.force_lifts and len(self.force_lifts) != len(self.states) - 1:
            raise DimensionError("need one force lift per transition")

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([s.values for s in self.states])


@dataclass(frozen=True, eq=False)
class FitOptions:
    energy_target: float = DEFAULT_ENERGY
    rank: int | None = None            # fixed-r override of the energy policy
    clamp_unit_disk: bool = True
    displacement_only: bool = False    # ablation: drop the momentum block


@dataclass(frozen=True, eq=False)
class FitReport:
    rank: int
    singular_values: np.ndarray
    per_column_residual: np.ndarray    # one-step relative residual per pair
    mean_residual: float
    max_eigenvalue_magnitude: float
    n_clamped: int
    mean_reconstruction_error: float


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    """Factored low-rank propagator: modes, eigenvalues, and left basis."""

    modes: np.ndarray            # (dim, r) complex
    eigenvalues: np.ndarray      # (r,) complex
    h: float
    left_basis: np.ndarray       # (dim, r) real, orthonormal columns
    reduced_eigvecs: np.ndarray  # (r, r) complex
    n_vertices: int = 0

    def __post_init__(self):
        for name in ("modes", "eigenvalues", "reduced_eigvecs"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.complex128))
        object.__setattr__(self, "left_basis", np.ascontiguousarray(self.left_basis, dtype=np.float64))
        if self.n_vertices == 0 and self.modes.shape[0] % 6 == 0:
            object.__setattr__(self, "n_vertices", self.modes.shape[0] // 6)
        for arr in (self.modes, self.eigenvalues, self.left_basis, self.reduced_eigvecs):
            arr.setflags(write=False)

    @property
    def rank(self) -> int:
        return self.eigenvalues.size

    @property
    def dim(self) -> int:
        return self.modes.shape[0]

    def with_eigenvalues(self, eigenvalues, h=None) -> "KoopmanModel":
        return replace(self, eigenvalues=np.asarray(eigenvalues, dtype=np.complex128),
                       h=self.h if h is None else h)


def build_shift_pairs(snaps: SnapshotSet):
    """Time-shifted data matrices (X, X').  When the snapshot set records the
    per-transition forcing, it is added to the input columns so that the pair
    (X + F, X') constrains the autonomous operator."""
    if snaps.n_steps < 1:
        raise InsufficientDataError("need at least 2 snapshots for one shifted pair")
    M = snaps.as_matrix()
    X, Xp = M[:, :-1].copy(), M[:, 1:].copy()
    if snaps.force_lifts:
        X += np.column_stack([f.values for f in snaps.force_lifts])
    return X, Xp


def truncated_svd(X: np.ndarray, energy_target: float = DEFAULT_ENERGY,
                  rank: int | None = None):
    """Rank-truncated SVD of the snapshot matrix.

    The default policy keeps singular values until their cumulative squared
    energy reaches ``energy_target``, with a hard floor at
    ``SINGULAR_FLOOR * sigma_1``.  A fixed rank overrides the policy.
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.any(X):
        raise DegenerateDataError("snapshot matrix is identically zero")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = s > SINGULAR_FLOOR * s[0]
    if rank is not None:
        if rank < 1:
            raise DimensionError(f"rank must be >= 1, got {rank}")
        r = min(rank, int(keep.sum()))
    else:
        energy = np.cumsum(s**2) / np.sum(s**2)
        r = int(np.searchsorted(energy, energy_target) + 1)
        r = min(r, int(keep.sum()))
    return U[:, :r], s[:r], Vt[:r].T


def reduced_operator(Xp: np.ndarray, U_r: np.ndarray, sigma_r: np.ndarray,
                     V_r: np.ndarray) -> np.ndarray:
    """Projection of the least-squares operator onto the SVD basis."""
    return (U_r.T @ Xp @ V_r) / sigma_r[None, :]


def eigendecompose(K_reduced: np.ndarray):
    """Eigenpairs of the reduced operator, sorted by descending magnitude,
    ties by descending imaginary part (placing conjugate pairs adjacent)."""
    eigvals, eigvecs = np.linalg.eig(K_reduced)
    cond = np.linalg.cond(eigvecs)
    if cond > 1e12:
        raise IllConditionedError(
            f"eigenbasis condition number {cond:.3e} exceeds 1e12"
        )
    order = np.lexsort((-eigvals.imag, -np.abs(eigvals)))
    return eigvecs[:, order], eigvals[order]


def fit(snaps: SnapshotSet, opts: FitOptions = FitOptions()):
    """Fit the low-rank model; returns (model, report)."""
    X, Xp = build_shift_pairs(snaps)
    if opts.displacement_only:
        half = X.shape[0] // 2
        X, Xp = X[:half], Xp[:half]
    U_r, sigma_r, V_r = truncated_svd(X, opts.energy_target, opts.rank)
    K_reduced = reduced_operator(Xp, U_r, sigma_r, V_r)
    eigvecs, eigvals = eigendecompose(K_reduced)

    n_clamped = 0
    if opts.clamp_unit_disk:
        mags = np.abs(eigvals)
        over = mags > 1.0
        n_clamped = int(over.sum())
        if n_clamped:
            eigvals = np.where(over, eigvals / mags, eigvals)

    modes = U_r @ eigvecs
    n_vertices = X.shape[0] // 6 if not opts.displacement_only else 0
    model = KoopmanModel(modes=modes, eigenvalues=eigvals, h=snaps.h,
                         left_basis=U_r, reduced_eigvecs=eigvecs,
                         n_vertices=n_vertices)

    # one-step training residuals, relative to the overall data scale
    pred = np.real(modes @ (eigvals[:, None] * _project_matrix(model, X)))
    scale = np.linalg.norm(Xp) / np.sqrt(Xp.shape[1])
    col_res = np.linalg.norm(pred - Xp, axis=0) / max(scale, 1e-300)
    recon = np.real(modes @ _project_matrix(model, X))
    recon_err = np.linalg.norm(recon - X, axis=0) / max(np.linalg.norm(X) / np.sqrt(X.shape[1]), 1e-300)
    report = FitReport(
        rank=model.rank,
        singular_values=sigma_r,
        per_column_residual=col_res,
        mean_residual=float(col_res.mean()),
        max_eigenvalue_magnitude=float(np.abs(eigvals).max()),
        n_clamped=n_clamped,
        mean_reconstruction_error=float(recon_err.mean()),
    )
    return model, report


def _project_matrix(model: KoopmanModel, X: np.ndarray) -> np.ndarray:
    """Least-squares reduced coordinates for each column of X."""
    z, _, rank, _ = np.linalg.lstsq(model.modes, X.astype(np.complex128), rcond=None)
    if rank < model.rank:
        warnings.warn("mode matrix is rank-deficient; minimum-norm projection used",
                      IllConditionedWarning, stacklevel=3)
    return z


def project(model: KoopmanModel, x) -> np.ndarray:
    """Reduced coordinates of a state: argmin_z ||modes @ z - x||_2.

    Implemented as a least-squares solve, never via an explicitly formed
    pseudoinverse.
    """
    vec = x.values if isinstance(x, LiftedState) else np.asarray(x)
    if vec.size != model.dim:
        raise DimensionError(f"state dim {vec.size} != model dim {model.dim}")
    return _project_matrix(model, vec.reshape(-1, 1))[:, 0]


def reconstruct(model: KoopmanModel, x):
    """Orthogonal-projection reconstruction of x through the modes.

    Returns (reconstructed LiftedState, relative reconstruction error).
    """
    vec = x.values if isinstance(x, LiftedState) else np.asarray(x, dtype=np.float64)
    rec = np.real(model.modes @ project(model, vec))
    norm = np.linalg.norm(vec)
    err = np.linalg.norm(vec - rec) / norm if norm > 0 else 0.0
    if rec.size % 6 == 0:
        return LiftedState(rec), float(err)
    return rec, float(err)
