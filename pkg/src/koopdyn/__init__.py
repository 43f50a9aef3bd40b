"""Reduced-order deformable dynamics via a low-rank learned linear propagator.

Fits the operator from elastic simulation snapshots and advances the system by
eigenvalue exponentiation: long-horizon jumps in O(log N), time-step
rescaling, damping edits, and quasi-static non-negative pressure control,
next to a full-space implicit-Euler reference simulator.
"""

from .statespace import LiftedState, ForceLift, lift, unlift, lift_force
from .refsim import (
    ElasticModel,
    FullState,
    implicit_euler_step,
    simulate_trajectory,
    kinetic_energy,
    linear_transition_matrix,
    rest_state,
)
from .dmdfit import (
    SnapshotSet,
    KoopmanModel,
    FitOptions,
    FitReport,
    fit,
    project,
    reconstruct,
)
from .koopstep import (
    RealOperator,
    step,
    step_forced,
    multi_step,
    rescale_timestep,
    apply_damping,
    realify,
    real_operator,
    real_multi_step,
    propagator_sum,
)
from .control import (
    ControlProblem,
    PressureForceMap,
    pressure_force_map,
    predict_final,
    solve_pressures,
    replay_pressures,
    nnls,
)
from .estimator import KoopmanOperator
from . import errors, io, scenarios

__all__ = [
    "LiftedState", "ForceLift", "lift", "unlift", "lift_force",
    "ElasticModel", "FullState", "implicit_euler_step", "simulate_trajectory",
    "kinetic_energy", "linear_transition_matrix", "rest_state",
    "SnapshotSet", "KoopmanModel", "FitOptions", "FitReport", "fit",
    "project", "reconstruct",
    "RealOperator", "step", "step_forced", "multi_step", "rescale_timestep",
    "apply_damping", "realify", "real_operator", "real_multi_step",
    "propagator_sum",
    "ControlProblem", "PressureForceMap", "pressure_force_map",
    "predict_final", "solve_pressures", "replay_pressures", "nnls",
    "KoopmanOperator",
    "errors", "io", "scenarios",
]

__version__ = "0.1.0"
