"""Full-space reference simulator: nonlinear mass-spring network advanced by
implicit Euler with Newton iterations.

Used to generate training snapshots, as the baseline for step-size damping
comparisons, and to validate control signals in full space.  A per-model flag
switches the spring force to its linearization, which makes the one-step map
exactly linear (the oracle regime for operator-recovery tests).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import statespace
from .errors import ConvergenceError, DimensionError, DomainError

NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 50
DEGENERATE_LEN = 1e-12


@dataclass(frozen=True, eq=False)
class ElasticModel:
    """Mass-spring network with pinned vertices and optional gravity."""

    rest_positions: np.ndarray          # (n, 3)
    springs: tuple                      # of (i, j, rest_length, stiffness)
    vertex_masses: np.ndarray           # (n,)
    fixed_vertices: frozenset = frozenset()
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    linearized: bool = False            # use -k (d - d_rest) spring force

    def __post_init__(self):
        rest = np.ascontiguousarray(self.rest_positions, dtype=np.float64)
        masses = np.ascontiguousarray(self.vertex_masses, dtype=np.float64)
        grav = np.ascontiguousarray(self.gravity, dtype=np.float64)
        object.__setattr__(self, "rest_positions", rest)
        object.__setattr__(self, "vertex_masses", masses)
        object.__setattr__(self, "gravity", grav)
        object.__setattr__(self, "fixed_vertices", frozenset(self.fixed_vertices))
        object.__setattr__(self, "springs", tuple(tuple(s) for s in self.springs))
        n = rest.shape[0]
        if rest.ndim != 2 or rest.shape[1] != 3:
            raise DimensionError(f"rest positions must be (n, 3), got {rest.shape}")
        if masses.shape != (n,):
            raise DimensionError("vertex_masses length must match rest_positions")
        if np.any(masses <= 0):
            raise DomainError("every vertex mass must be positive")
        for i, j, length, k in self.springs:
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise DomainError(f"bad spring endpoints ({i}, {j})")
            if length <= 0 or k <= 0:
                raise DomainError(f"spring ({i}, {j}) needs positive rest length and stiffness")
        for i in self.fixed_vertices:
            if not 0 <= i < n:
                raise DomainError(f"fixed vertex {i} out of range")
        rest.setflags(write=False)
        masses.setflags(write=False)
        grav.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.rest_positions.shape[0]

    @property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[list(self.fixed_vertices)] = False
        return mask

    def linearize(self) -> "ElasticModel":
        return replace(self, linearized=True)


@dataclass(frozen=True, eq=False)
class FullState:
    positions: np.ndarray   # (n, 3)
    velocities: np.ndarray  # (n, 3)
    time: float = 0.0

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        vel = np.ascontiguousarray(self.velocities, dtype=np.float64)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        if pos.shape != vel.shape or pos.ndim != 2 or pos.shape[1] != 3:
            raise DimensionError("positions and velocities must both be (n, 3)")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise DomainError("state contains NaN/Inf")
        pos.setflags(write=False)
        vel.setflags(write=False)


def rest_state(model: ElasticModel) -> FullState:
    return FullState(model.rest_positions.copy(), np.zeros_like(model.rest_positions))


def internal_forces(model: ElasticModel, positions: np.ndarray) -> np.ndarray:
    """Spring forces at the given configuration, (n, 3)."""
    f = np.zeros_like(positions)
    rest = model.rest_positions
    for i, j, length, k in model.springs:
        d = positions[i] - positions[j]
        if model.linearized:
            fi = -k * (d - (rest[i] - rest[j]))
        else:
            dist = np.linalg.norm(d)
            if dist < DEGENERATE_LEN:
                continue
            fi = -k * (dist - length) * (d / dist)
        f[i] += fi
        f[j] -= fi
    return f


def _stiffness(model: ElasticModel, positions: np.ndarray) -> np.ndarray:
    """Assembled -dF/dx with per-spring SPD projection, (3n, 3n)."""
    n = model.n_vertices
    S = np.zeros((3 * n, 3 * n))
    eye = np.eye(3)
    for i, j, length, k in model.springs:
        if model.linearized:
            block = k * eye
        else:
            d = positions[i] - positions[j]
            dist = np.linalg.norm(d)
            if dist < DEGENERATE_LEN:
                continue
            u = d / dist
            uu = np.outer(u, u)
            # clamp the tangential factor at zero to keep the system SPD
            block = k * (uu + max(0.0, 1.0 - length / dist) * (eye - uu))
        si, sj = slice(3 * i, 3 * i + 3), slice(3 * j, 3 * j + 3)
        S[si, si] += block
        S[sj, sj] += block
        S[si, sj] -= block
        S[sj, si] -= block
    return S


def implicit_euler_step(model: ElasticModel, s: FullState, h: float,
                        f_ext: np.ndarray | None = None) -> FullState:
    """One backward-Euler step, solving M(v'-v) = h (F(x + h v') + f_ext) by
    Newton with an analytic spring Jacobian and dense Cholesky."""
    if h <= 0:
        raise DomainError(f"step size must be positive, got {h}")
    n = model.n_vertices
    if f_ext is None:
        f_ext = np.zeros((n, 3))
    f_ext = np.asarray(f_ext, dtype=np.float64).reshape(n, 3)
    free = model.free_mask
    free_dofs = np.repeat(free, 3)

    masses3 = np.repeat(model.vertex_masses, 3)
    grav_force = model.vertex_masses[:, None] * model.gravity[None, :]
    const_force = (f_ext + grav_force).ravel()
    x0 = s.positions.ravel()
    v0 = s.velocities.ravel().copy()
    v0[~free_dofs] = 0.0

    v = v0.copy()
    residual = None
    for _ in range(NEWTON_MAX_ITER):
        x_new = x0 + h * v
        force = internal_forces(model, x_new.reshape(n, 3)).ravel() + const_force
        r = masses3 * (v - v0) - h * force
        r[~free_dofs] = 0.0
        residual = np.linalg.norm(r)
        if residual <= NEWTON_TOL:
            break
        S = _stiffness(model, x_new.reshape(n, 3))
        J = np.diag(masses3) + h * h * S
        Jf = J[np.ix_(free_dofs, free_dofs)]
        try:
            L = np.linalg.cholesky(Jf)
        except np.linalg.LinAlgError:
            # SPD projection should prevent this; regularize as a fallback
            Jf = Jf + 1e-10 * np.trace(Jf) / Jf.shape[0] * np.eye(Jf.shape[0])
            L = np.linalg.cholesky(Jf)
        dv = np.linalg.solve(L.T, np.linalg.solve(L, -r[free_dofs]))
        v[free_dofs] += dv
    else:
        raise ConvergenceError(
            f"Newton failed to reach tol {NEWTON_TOL} in {NEWTON_MAX_ITER} iterations",
            residual=residual,
        )

    x_new = x0 + h * v
    x_new[~free_dofs] = x0[~free_dofs]
    return FullState(x_new.reshape(n, 3), v.reshape(n, 3), s.time + h)


def simulate_trajectory(model: ElasticModel, s0: FullState, h: float, steps: int,
                        forcing=None):
    """Run ``steps`` implicit-Euler steps and return the lifted snapshots.

    ``forcing`` may be None, a constant (n, 3) array, or a callable taking the
    step index (0-based, force applied during step t -> t+1) and optionally
    the current FullState, returning an (n, 3) array of Newtons.
    Displacements are taken relative to the rest positions; the first frame's
    momentum is seeded as h * v0, consistent with the backward-Euler identity
    u_t - u_{t-1} = h v_t.
    """
    from .dmdfit import SnapshotSet

    if steps < 2:
        raise DomainError(f"need at least 2 steps for shifted pairs, got {steps}")
    n = model.n_vertices
    rest = model.rest_positions

    if callable(forcing):
        import inspect
        n_params = len(inspect.signature(forcing).parameters)

        def force_at(t, state):
            out = forcing(t, state) if n_params >= 2 else forcing(t)
            return np.asarray(out, dtype=np.float64).reshape(n, 3)
    elif forcing is None:
        def force_at(t, state):
            return None
    else:
        const = np.asarray(forcing, dtype=np.float64).reshape(n, 3)

        def force_at(t, state):
            return const

    states = []
    force_lifts = []
    u0 = (s0.positions - rest).ravel()
    states.append(statespace.lift(u0, u0 - h * s0.velocities.ravel()))
    s = s0
    for t in range(steps):
        f = force_at(t, s)
        try:
            s = implicit_euler_step(model, s, h, f)
        except ConvergenceError as exc:
            raise ConvergenceError(f"step {t}: {exc}", residual=exc.residual) from exc
        u_prev = states[-1].displacement
        u = (s.positions - rest).ravel()
        states.append(statespace.lift(u, u_prev))
        f_acc = np.zeros(3 * n) if f is None else (f / model.vertex_masses[:, None]).ravel()
        f_acc += np.tile(model.gravity, n)
        force_lifts.append(statespace.lift_force(f_acc, h))
    return SnapshotSet(states=tuple(states), h=h, rest_positions=rest,
                       force_lifts=tuple(force_lifts))


def kinetic_energy(x: statespace.LiftedState, masses, h: float) -> float:
    """0.5 * sum_i m_i ||momentum_i / h||^2."""
    if h <= 0:
        raise DomainError(f"step size must be positive, got {h}")
    masses = np.asarray(masses, dtype=np.float64).ravel()
    v = (x.momentum / h).reshape(-1, 3)
    return float(0.5 * np.sum(masses * np.sum(v * v, axis=1)))


def linear_transition_matrix(model: ElasticModel, h: float) -> np.ndarray:
    """Dense 6n x 6n one-step map of the linearized system in lifted
    coordinates, built column-by-column from the simulator itself."""
    if not model.linearized:
        model = model.linearize()
    n = model.n_vertices
    dim = 6 * n
    rest = model.rest_positions
    A = np.zeros((dim, dim))
    for col in range(dim):
        e = np.zeros(dim)
        e[col] = 1.0
        x = statespace.LiftedState(e)
        u, u_prev = statespace.unlift(x)
        s = FullState(rest + u.reshape(n, 3), ((u - u_prev) / h).reshape(n, 3))
        s1 = implicit_euler_step(model, s, h)
        u1 = (s1.positions - rest).ravel()
        A[:, col] = statespace.lift(u1, u).values
    return A
