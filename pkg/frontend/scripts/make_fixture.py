"""Build the integration-test fixture: a pneumatic-beam mesh and a fitted
model, written next to each other in the given directory.

Usage: python3 make_fixture.py OUT_DIR

Prints JSON metadata {"n_vertices": ..., "h": ...} on stdout.
"""
import json
import pathlib
import sys

import numpy as np

import koopdyn.control as ctl
from koopdyn import dmdfit, io, refsim, scenarios

H = 0.02
RANK = 10


def main(out_dir: pathlib.Path) -> None:
    elastic, chambers = scenarios.pneumatic_beam(layers=3, stiffness=200.0)

    # excite every chamber with a seeded random pressure schedule
    rng = np.random.default_rng(1)
    schedule = [rng.uniform(0.0, 3.0, size=len(chambers)) for _ in range(4)]

    def forcing(t, state):
        return ctl.chamber_forces(state.positions, chambers,
                                  schedule[min(t // 30, 3)])

    snaps = refsim.simulate_trajectory(elastic, refsim.rest_state(elastic),
                                       H, 120, forcing=forcing)
    model, _report = dmdfit.fit(snaps, dmdfit.FitOptions(rank=RANK))

    io.write_model(out_dir / "beam.kpdm", model)
    (out_dir / "beam.mesh").write_text(io.format_mesh(elastic, chambers))
    print(json.dumps({"n_vertices": elastic.n_vertices, "h": H}))


if __name__ == "__main__":
    main(pathlib.Path(sys.argv[1]))
