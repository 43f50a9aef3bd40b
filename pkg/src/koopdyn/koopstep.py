"""Time stepping through the factored operator.

Single forced/unforced steps, multi-step jumps by eigenvalue exponentiation,
time-step rescaling, damping edits, the realified drift-free operator, and the
geometric propagator sum used by the control solver.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from weakref import WeakKeyDictionary

import numpy as np

from .dmdfit import KoopmanModel, project
from .statespace import ForceLift, LiftedState
from .errors import (
    AliasingWarning,
    DimensionError,
    DomainError,
    IllConditionedWarning,
    StepSizeError,
)

ALIAS_ANGLE_MARGIN = 0.1
SINGULAR_LOG_FLOOR = 1e-14

_real_op_cache: "WeakKeyDictionary[KoopmanModel, RealOperator]" = WeakKeyDictionary()


def _as_vector(x, dim):
    vec = x.values if isinstance(x, LiftedState) else np.asarray(x, dtype=np.float64).ravel()
    if vec.size != dim:
        raise DimensionError(f"state dim {vec.size} != model dim {dim}")
    return vec


def _wrap(vec):
    return LiftedState(vec) if vec.size % 6 == 0 else vec


@dataclass(frozen=True, eq=False)
class RealOperator:
    """Realified 2r x 2r propagator with the imaginary-block projection baked
    in, for drift-free long-horizon jumps."""

    K_real: np.ndarray           # (2r, 2r)
    modes_realified: np.ndarray  # (2*dim, 2r), [[A, -B], [B, A]]
    rank: int

    def power(self, N: int) -> np.ndarray:
        # binary (repeated-squaring) exponentiation of the 2r x 2r block
        return np.linalg.matrix_power(self.K_real, int(N))


def _eig_powers(eigvals: np.ndarray, N) -> np.ndarray:
    """Per-entry eigenvalue powers; integer N uses exact magnitude/angle
    powers, fractional N goes through the principal-branch log."""
    if float(N) == int(N):
        n = int(N)
        return np.abs(eigvals) ** n * np.exp(1j * n * np.angle(eigvals))
    return np.exp(float(N) * np.log(eigvals.astype(np.complex128)))


def step(model: KoopmanModel, x):
    """One step: lift back the eigenvalue-scaled reduced coordinates."""
    vec = _as_vector(x, model.dim)
    z = project(model, vec)
    return _wrap(np.real(model.modes @ (model.eigenvalues * z)))


def step_forced(model: KoopmanModel, x, force: ForceLift):
    """Forced step: the force is injected into the state before propagation."""
    if not np.isclose(force.h, model.h, rtol=1e-12, atol=0.0):
        raise StepSizeError(
            f"force lift built for h={force.h}, model has h={model.h}"
        )
    vec = _as_vector(x, model.dim)
    return step(model, vec + force.values)


def multi_step(model: KoopmanModel, x, N):
    """Jump N steps at once via per-mode eigenvalue powers; cost is O(log N)
    in the horizon and independent of the full dimension beyond the two mode
    multiplications."""
    if N < 0:
        raise DomainError(f"step count must be >= 0, got {N}")
    vec = _as_vector(x, model.dim)
    z = project(model, vec)
    return _wrap(np.real(model.modes @ (_eig_powers(model.eigenvalues, N) * z)))


def rescale_timestep(model: KoopmanModel, h_new: float) -> KoopmanModel:
    """Retarget the model to a new step size by principal-branch rescaling of
    the eigenvalues; the modes are unchanged."""
    if h_new <= 0:
        raise DomainError(f"step size must be positive, got {h_new}")
    small = np.abs(model.eigenvalues) < SINGULAR_LOG_FLOOR
    if np.any(small):
        idx = int(np.argmax(small))
        raise DomainError(
            f"eigenvalue {idx} has magnitude below {SINGULAR_LOG_FLOOR}; log is singular"
        )
    ratio = h_new / model.h
    if ratio > 1.0:
        near_nyquist = np.abs(np.angle(model.eigenvalues)) > np.pi - ALIAS_ANGLE_MARGIN
        if np.any(near_nyquist):
            warnings.warn(
                f"{int(near_nyquist.sum())} mode(s) near the negative real axis "
                "cannot be rescaled faithfully to a larger step",
                AliasingWarning, stacklevel=2,
            )
    new_eigs = np.exp(ratio * np.log(model.eigenvalues))
    return model.with_eigenvalues(new_eigs, h=h_new)


def apply_damping(model: KoopmanModel, mu: float) -> KoopmanModel:
    """Uniformly shrink all eigenvalues by (1 - mu)."""
    if not 0.0 <= mu < 1.0:
        raise DomainError(f"damping fraction must be in [0, 1), got {mu}")
    return model.with_eigenvalues((1.0 - mu) * model.eigenvalues)


def realify(model: KoopmanModel, project_imaginary: bool = True) -> RealOperator:
    """Build the realified reduced operator.

    The complex modes Phi = A + iB and eigenvalues Lambda = C + iD are
    rewritten as doubled real blocks [[A, -B], [B, A]] and [[C, -D], [D, C]];
    the physical imaginary block is zeroed before the least-squares pull-back,
    so each application of the operator discards imaginary drift.
    ``project_imaginary=False`` skips the projection (diagnostic path).
    """
    A, B = np.real(model.modes), np.imag(model.modes)
    C, D = np.diag(np.real(model.eigenvalues)), np.diag(np.imag(model.eigenvalues))
    phi_r = np.block([[A, -B], [B, A]])
    lam_r = np.block([[C, -D], [D, C]])
    target = phi_r @ lam_r
    if project_imaginary:
        target = target.copy()
        target[model.dim:, :] = 0.0
    K_real, _, rank, _ = np.linalg.lstsq(phi_r, target, rcond=None)
    if rank < 2 * model.rank:
        warnings.warn("realified mode matrix is rank-deficient",
                      IllConditionedWarning, stacklevel=2)
    return RealOperator(K_real=K_real, modes_realified=phi_r, rank=model.rank)


def real_operator(model: KoopmanModel) -> RealOperator:
    """Cached realified operator for the model; edited models are new values,
    so the per-model cache never goes stale."""
    op = _real_op_cache.get(model)
    if op is None:
        op = realify(model)
        _real_op_cache[model] = op
    return op


def real_multi_step(op: RealOperator, model: KoopmanModel, x, N: int):
    """Advance N steps through the realified operator: project, split into
    real/imaginary coordinates, exponentiate the 2r x 2r block by repeated
    squaring, and lift the result back through the complex modes."""
    if N < 0:
        raise DomainError(f"step count must be >= 0, got {N}")
    vec = _as_vector(x, model.dim)
    z = project(model, vec)
    z_r = np.concatenate([np.real(z), np.imag(z)])
    z_r = op.power(N) @ z_r
    z_new = z_r[: model.rank] + 1j * z_r[model.rank:]
    full = model.modes @ z_new
    return _wrap(np.real(full))


def imaginary_residue(model: KoopmanModel, op: RealOperator, x, N: int) -> float:
    """Relative imaginary residue of the realified N-step jump before the
    final projection to the real state."""
    vec = _as_vector(x, model.dim)
    z = project(model, vec)
    z_r = np.concatenate([np.real(z), np.imag(z)])
    z_r = op.power(N) @ z_r
    z_new = z_r[: model.rank] + 1j * z_r[model.rank:]
    full = model.modes @ z_new
    norm = np.linalg.norm(vec)
    return float(np.linalg.norm(np.imag(full)) / norm) if norm > 0 else 0.0


def spectral_radius(op: RealOperator, iters: int = 200, seed: int = 0) -> float:
    """Power-iteration estimate of the realified operator's spectral radius."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.K_real.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.K_real @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        lam, v = nw, w / nw
    return float(lam)


def propagator_sum(model_or_eigs, N: int) -> np.ndarray:
    """Geometric sum of eigenvalue powers, sum_{t=1}^N lambda^t, per mode.

    Uses the closed form lambda (lambda^N - 1) / (lambda - 1) away from
    lambda = 1 and falls back to direct summation in the neighbourhood of the
    pole.
    """
    if N < 1:
        raise DomainError(f"horizon must be >= 1, got {N}")
    eigs = (model_or_eigs.eigenvalues if isinstance(model_or_eigs, KoopmanModel)
            else np.asarray(model_or_eigs, dtype=np.complex128)).ravel()
    out = np.empty_like(eigs)
    near_one = np.abs(eigs - 1.0) <= 1e-8
    safe = ~near_one
    if np.any(safe):
        lam = eigs[safe]
        out[safe] = lam * (_eig_powers(lam, N) - 1.0) / (lam - 1.0)
    for i in np.nonzero(near_one)[0]:
        out[i] = np.cumprod(np.full(N, eigs[i])).sum()
    return out
