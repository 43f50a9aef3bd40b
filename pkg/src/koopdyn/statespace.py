"""Lifted observable state: stacked displacement and per-step momentum.

The operator learned by this package acts on a 6n vector holding the vertex
displacements followed by the per-step displacement differences.  Forces are
injected through the momentum block only, scaled by the squared step size.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True, eq=False)
class LiftedState:
    """Observable vector [displacement; momentum] over n vertices.

    ``momentum`` stores the raw displacement difference u_t - u_{t-1}; divide
    by the step size to recover velocity in physical units.
    """

    values: np.ndarray  # contiguous length-6n vector, displacement block first
    n_vertices: int = field(default=0)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size == 0 or vals.size % 6 != 0:
            raise DimensionError(
                f"lifted state must be a flat 6n vector, got shape {vals.shape}"
            )
        n = vals.size // 6
        if self.n_vertices == 0:
            object.__setattr__(self, "n_vertices", n)
        elif self.n_vertices != n:
            raise DimensionError(
                f"n_vertices={self.n_vertices} inconsistent with vector length {vals.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("lifted state contains NaN/Inf")
        vals.setflags(write=False)

    @property
    def displacement(self) -> np.ndarray:
        return self.values[: 3 * self.n_vertices]

    @property
    def momentum(self) -> np.ndarray:
        return self.values[3 * self.n_vertices:]

    @property
    def dim(self) -> int:
        return self.values.size

    def __add__(self, other):
        if isinstance(other, LiftedState):
            other = other.values
        return LiftedState(self.values + other)

    def __sub__(self, other):
        if isinstance(other, LiftedState):
            other = other.values
        return LiftedState(self.values - other)

    def __mul__(self, scalar: float):
        return LiftedState(self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class ForceLift:
    """Force expressed in observable coordinates: zeros over the displacement
    block, f*h^2 over the momentum block."""

    values: np.ndarray
    h: float

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if self.h <= 0:
            raise DomainError(f"step size must be positive, got {self.h}")
        if vals.ndim != 1 or vals.size % 6 != 0:
            raise DimensionError(f"force lift must be a flat 6n vector, got {vals.shape}")
        n3 = vals.size // 2
        if np.any(vals[:n3] != 0.0):
            raise DomainError("force lift displacement block must be zero")
        vals.setflags(write=False)

    @property
    def momentum(self) -> np.ndarray:
        return self.values[self.values.size // 2:]


def lift(u_curr, u_prev) -> LiftedState:
    """Stack the current displacement with its backward difference."""
    u_curr = np.asarray(u_curr, dtype=np.float64).ravel()
    u_prev = np.asarray(u_prev, dtype=np.float64).ravel()
    if u_curr.shape != u_prev.shape:
        raise DimensionError(
            f"displacement lengths differ: {u_curr.size} vs {u_prev.size}"
        )
    if u_curr.size % 3 != 0:
        raise DimensionError(f"displacement length {u_curr.size} is not a multiple of 3")
    return LiftedState(np.concatenate([u_curr, u_curr - u_prev]))


def unlift(x: LiftedState):
    """Inverse of :func:`lift`: returns (u_curr, u_prev)."""
    u_curr = x.displacement.copy()
    return u_curr, u_curr - x.momentum


def lift_force(f, h: float) -> ForceLift:
    """Lift a per-unit-mass force into the observable space as [0; f h^2]."""
    if h <= 0:
        raise DomainError(f"step size must be positive, got {h}")
    f = np.asarray(f, dtype=np.float64).ravel()
    if f.size % 3 != 0:
        raise DimensionError(f"force length {f.size} is not a multiple of 3")
    return ForceLift(np.concatenate([np.zeros_like(f), f * h * h]), h)
