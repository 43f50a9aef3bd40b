"""Replay a recorded client message log through direct library calls and
print the final vertex positions (and any solved pressures) as JSON.

Usage: python3 replay_oracle.py MODEL MESH LOG_JSON

This deliberately bypasses the service module: it re-derives the session
semantics (absolute damping/step-size edits from the pristine model, pending
force consumed by the next step) straight from the stepping and control
libraries, so the integration test compares two independent paths.
"""
import json
import pathlib
import sys

import numpy as np

import koopdyn.control as ctl
from koopdyn import io, koopstep
from koopdyn.statespace import LiftedState, lift_force


def main(model_path, mesh_path, log_path):
    pristine = io.read_model(model_path)
    elastic, chambers = io.read_mesh(mesh_path)
    n = pristine.n_vertices

    model = pristine
    h_active, mu_active = pristine.h, 0.0
    current = LiftedState(np.zeros(pristine.dim))
    pending = None
    pressures = None

    def rebuild():
        m = pristine
        if mu_active > 0.0:
            m = koopstep.apply_damping(m, mu_active)
        if h_active != pristine.h:
            m = koopstep.rescale_timestep(m, h_active)
        return m

    for msg in json.loads(pathlib.Path(log_path).read_text()):
        kind = msg["type"]
        if kind == "load":
            current = LiftedState(np.zeros(pristine.dim))
            pending = None
        elif kind == "force":
            f = np.zeros(3 * n)
            v = int(msg["vertex"])
            f[3 * v: 3 * v + 3] = (np.asarray(msg["vec"], dtype=np.float64)
                                   / elastic.vertex_masses[v])
            pending = lift_force(f, h_active)
        elif kind == "set_h":
            h_active = float(msg["h"])
            model = rebuild()
            pending = None
        elif kind == "set_damping":
            mu_active = float(msg["mu"])
            model = rebuild()
        elif kind == "step":
            steps = int(msg["n"])
            if steps > 0:
                x = current.values
                if pending is not None:
                    x = x + pending.values
                    pending = None
                op = koopstep.real_operator(model)
                current = koopstep.real_multi_step(op, model, x, steps)
        elif kind == "control":
            dofs, goal = [], []
            for vertex, disp in msg["targets"]:
                dofs.extend(range(3 * int(vertex), 3 * int(vertex) + 3))
                goal.extend(disp)
            problem = ctl.ControlProblem(chambers=chambers,
                                         goal_dofs=np.asarray(dofs, dtype=np.intp),
                                         goal=np.asarray(goal, dtype=np.float64),
                                         horizon=int(msg["horizon"]))
            C, _trace = ctl.solve_pressures(model, problem, current,
                                            elastic.rest_positions,
                                            elastic.vertex_masses)
            pressures = C.tolist()
        elif kind == "reset":
            current = LiftedState(np.zeros(pristine.dim))
            pending = None
        else:
            raise SystemExit(f"unknown log message type {kind!r}")

    positions = elastic.rest_positions + current.displacement.reshape(n, 3)
    print(json.dumps({"positions": positions.ravel().tolist(),
                      "pressures": pressures}))


if __name__ == "__main__":
    main(*sys.argv[1:4])
