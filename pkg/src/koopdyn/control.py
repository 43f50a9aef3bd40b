"""Quasi-static control-force estimation.

Maps chamber pressures to lifted forces through deformed face areas, predicts
the settled state through the time-integrated propagator, and solves for
non-negative pressures hitting a goal, refreshing the state-dependent force
map over a fixed number of outer iterations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import koopstep
from .dmdfit import KoopmanModel, project
from .statespace import LiftedState, lift_force
from .errors import ConvergenceError, DimensionError, DomainError

DEGENERATE_AREA = 1e-14
NNLS_TOL = 1e-10
NNLS_MAX_ITER = 1000


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Goal specification for the quasi-static pressure solve.

    ``chambers`` maps chamber index -> list of (i, j, k) triangle faces with
    outward winding; ``goal_dofs`` are indices into the lifted state (one per
    goal row, the rows of the 0/1 selection matrix); ``goal`` are the target
    values for those DOFs.
    """

    chambers: tuple                  # k entries, each a tuple of (i, j, k) faces
    goal_dofs: np.ndarray
    goal: np.ndarray
    horizon: int
    iterations: int = 5              # fixed outer-iteration count
    momentum_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "chambers",
                           tuple(tuple(tuple(int(v) for v in f) for f in ch)
                                 for ch in self.chambers))
        object.__setattr__(self, "goal_dofs", np.asarray(self.goal_dofs, dtype=np.intp))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=np.float64))
        if len(self.chambers) < 1:
            raise DomainError("need at least one chamber")
        if self.horizon < 1:
            raise DomainError(f"horizon must be >= 1, got {self.horizon}")
        if self.iterations < 1:
            raise DomainError(f"iterations must be >= 1, got {self.iterations}")
        if self.momentum_weight < 0:
            raise DomainError("momentum weight must be >= 0")
        if self.goal_dofs.shape != self.goal.shape:
            raise DimensionError("goal_dofs and goal must have equal length")

    @property
    def n_chambers(self) -> int:
        return len(self.chambers)


@dataclass(frozen=True, eq=False)
class PressureForceMap:
    """6n x k matrix taking chamber pressures to a lifted force; only the
    momentum block carries nonzero rows."""

    A: np.ndarray

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=np.float64)
        object.__setattr__(self, "A", A)
        if not np.all(np.isfinite(A)):
            raise DomainError("pressure-force map contains NaN/Inf")
        if np.any(A[: A.shape[0] // 2] != 0.0):
            raise DomainError("pressure-force map must be zero on the displacement block")
        A.setflags(write=False)


def pressure_force_map(rest_positions, vertex_masses, x: LiftedState,
                       chambers, h: float) -> PressureForceMap:
    """Assemble the pressure-to-lifted-force matrix in the deformed
    configuration of ``x``.

    Each chamber face contributes its area-weighted outward normal, split
    equally over the face vertices, converted to per-unit-mass units and
    lifted through the h^2 momentum scaling.  Faces with area below
    ``DEGENERATE_AREA`` contribute nothing.
    """
    rest = np.asarray(rest_positions, dtype=np.float64).reshape(-1, 3)
    masses = np.asarray(vertex_masses, dtype=np.float64).ravel()
    n = rest.shape[0]
    pos = rest + x.displacement.reshape(n, 3)
    cols = []
    for faces in chambers:
        f = np.zeros((n, 3))
        for (a, b, c) in faces:
            an = 0.5 * np.cross(pos[b] - pos[a], pos[c] - pos[a])
            if np.linalg.norm(an) < DEGENERATE_AREA:
                continue
            for v in (a, b, c):
                f[v] += an / 3.0
        cols.append(lift_force((f / masses[:, None]).ravel(), h).values)
    return PressureForceMap(np.column_stack(cols))


def response_matrix(model: KoopmanModel, A: PressureForceMap, N: int) -> np.ndarray:
    """Columns are the settled responses to unit pressure on each chamber:
    Re(modes @ diag(propagator sum) @ reduced coordinates of each force)."""
    prop = koopstep.propagator_sum(model, N)
    z, *_ = np.linalg.lstsq(model.modes, A.A.astype(np.complex128), rcond=None)
    return np.real(model.modes @ (prop[:, None] * z))


def predict_final(model: KoopmanModel, A: PressureForceMap, C, N: int,
                  x0: LiftedState | None = None) -> LiftedState:
    """Quasi-static final state under constant pressures C held for N steps,
    plus the autonomous decay of the initial state when given."""
    C = np.asarray(C, dtype=np.float64).ravel()
    out = response_matrix(model, A, N) @ C
    if x0 is not None:
        out = out + koopstep.multi_step(model, x0, N).values
    return LiftedState(out)


def chamber_forces(positions: np.ndarray, chambers, pressures) -> np.ndarray:
    """Total pressure force in Newtons on each vertex for the given deformed
    positions: per face, pressure times the area-weighted outward normal,
    split equally over the face vertices."""
    f = np.zeros_like(positions)
    for faces, p in zip(chambers, np.asarray(pressures, dtype=np.float64).ravel()):
        for (a, b, c) in faces:
            an = 0.5 * np.cross(positions[b] - positions[a],
                                positions[c] - positions[a])
            if np.linalg.norm(an) < DEGENERATE_AREA:
                continue
            contrib = p * an / 3.0
            for v in (a, b, c):
                f[v] += contrib
    return f


def replay_pressures(elastic, chambers, pressures, h: float, steps: int):
    """Validate a pressure signal in full space: run the reference simulator
    with the pressures re-applied to the deformed chamber faces every step.
    Returns the lifted snapshot trajectory."""
    from . import refsim

    def forcing(_t, state):
        return chamber_forces(state.positions, chambers, pressures)

    return refsim.simulate_trajectory(elastic, refsim.rest_state(elastic),
                                      h, steps, forcing=forcing)


def nnls(M, b, tol: float = NNLS_TOL, max_iter: int = NNLS_MAX_ITER):
    """Active-set (Lawson-Hanson) non-negative least squares.

    Returns the KKT point of min ||M x - b||^2 s.t. x >= 0.  The dual
    (gradient) tolerance is ``tol`` relative to the initial gradient scale,
    so the solver is invariant to a uniform rescaling of M and b.
    """
    M = np.asarray(M, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if M.ndim != 2 or M.shape[0] != b.size:
        raise DimensionError(f"shape mismatch: M {M.shape}, b {b.shape}")
    m, k = M.shape
    x = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    w = M.T @ b
    dual_tol = tol * max(float(np.abs(w).max(initial=0.0)), np.finfo(np.float64).tiny)
    it = 0
    while True:
        candidates = ~passive & (w > dual_tol)
        if not np.any(candidates):
            return x
        j = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                raise ConvergenceError(
                    f"NNLS exceeded {max_iter} iterations",
                    residual=float(np.linalg.norm(M @ x - b)),
                )
            idx = np.nonzero(passive)[0]
            s = np.zeros(k)
            s[idx], *_ = np.linalg.lstsq(M[:, idx], b, rcond=None)
            if np.all(s[idx] > 0.0):
                x = s
                break
            # move toward s until the first passive variable hits zero
            neg = idx[s[idx] <= 0.0]
            denom = x[neg] - s[neg]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0.0, x[neg] / denom, np.inf)
            alpha = float(np.min(ratios)) if np.any(np.isfinite(ratios)) else 0.0
            x = x + alpha * (s - x)
            drop = neg[(ratios <= alpha) | (denom <= 0.0)]
            x[drop] = 0.0
            passive[drop] = False
        w = M.T @ (b - M @ x)


def solve_pressures(model: KoopmanModel, problem: ControlProblem,
                    x0: LiftedState, rest_positions, vertex_masses):
    """Iteratively solve for non-negative chamber pressures reaching the goal.

    Each outer iteration freezes the pressure-to-force map at the current
    predicted state, solves the stacked NNLS system (goal rows plus the
    momentum penalty enforcing a near-quasi-static finish), and refreshes the
    state with the resulting prediction.  Runs exactly
    ``problem.iterations`` iterations; returns (pressures, iterate trace).
    """
    n = x0.n_vertices
    dim = x0.dim
    mom_dofs = np.arange(3 * n, 6 * n)
    drift = koopstep.multi_step(model, x0, problem.horizon).values
    state = x0
    trace = []
    C = np.zeros(problem.n_chambers)
    for _ in range(problem.iterations):
        A = pressure_force_map(rest_positions, vertex_masses, state,
                               problem.chambers, model.h)
        M = response_matrix(model, A, problem.horizon)
        rows = [M[problem.goal_dofs]]
        rhs = [problem.goal - drift[problem.goal_dofs]]
        if problem.momentum_weight > 0:
            sw = np.sqrt(problem.momentum_weight)
            rows.append(sw * M[mom_dofs])
            rhs.append(-sw * drift[mom_dofs])
        C = nnls(np.vstack(rows), np.concatenate(rhs))
        state = LiftedState(drift + M @ C)
        trace.append((C.copy(), state))
    return C, trace
