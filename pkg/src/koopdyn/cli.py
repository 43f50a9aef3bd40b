"""Command-line toolchain: dataset generation, fitting, rollout,
benchmarking, control solves, and the interactive session server.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.
"""
from __future__ import annotations

import dataclasses
import functools
import json
import sys
import time

import click
import numpy as np

from . import control as ctl
from . import dmdfit, io, koopstep, refsim, scenarios
from .dmdfit import FitOptions
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DimensionError,
    DomainError,
    IllConditionedError,
    InsufficientDataError,
    KoopdynError,
    StepSizeError,
)
from .statespace import LiftedState

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_NUMERICAL_ERRORS = (ConvergenceError, IllConditionedError, StepSizeError)
_DATA_ERRORS = (DomainError, DimensionError, InsufficientDataError,
                DegenerateDataError)


def _classified(fn):
    """Map library exceptions onto the documented process exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _NUMERICAL_ERRORS as exc:
            click.echo(f"numerical error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (_DATA_ERRORS + (OSError, json.JSONDecodeError)) as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except KoopdynError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(),
              default=None, help="JSON run configuration (used by gen-data).")
@click.option("--seed", type=int, default=0, show_default=True,
              help="RNG seed for any randomized generation.")
@click.option("--output", "output_dir", type=click.Path(file_okay=False),
              default=".", show_default=True, help="Directory for output files.")
@click.pass_context
def main(ctx, config_path, seed, output_dir):
    """Reduced-order deformable dynamics toolchain."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, output_dir=output_dir)


# -- configuration loading ----------------------------------------------------

def _load_config(path):
    if path is None:
        raise DomainError("gen-data requires --config <run-config.json>")
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise DomainError("run config must be a JSON object")
    return cfg


def _build_scene(cfg):
    """Resolve the mesh/scenario section of a run config to
    (ElasticModel, chambers)."""
    if "mesh" in cfg:
        model, chambers = io.read_mesh(cfg["mesh"])
    elif "scenario" in cfg:
        sc = cfg["scenario"]
        name, params = sc.get("name"), sc.get("params", {})
        factory = {"chain": scenarios.chain, "strip": scenarios.strip,
                   "pneumatic_beam": scenarios.pneumatic_beam}.get(name)
        if factory is None:
            raise DomainError(f"unknown scenario {name!r}")
        built = factory(**params)
        model, chambers = built if isinstance(built, tuple) else (built, ())
    else:
        raise DomainError("run config needs a 'mesh' path or a 'scenario' entry")
    if cfg.get("linearized"):
        model = model.linearize()
    if "gravity" in cfg:
        model = dataclasses.replace(model, gravity=np.asarray(cfg["gravity"], float))
    return model, chambers


def _build_forcing(cfg, model, chambers, rng):
    """Resolve the forcing section to a simulate_trajectory forcing argument."""
    spec = cfg.get("forcing")
    if spec is None:
        return None
    if "impulses" in spec:
        by_step = {}
        for imp in spec["impulses"]:
            f = by_step.setdefault(int(imp["step"]), np.zeros((model.n_vertices, 3)))
            f[int(imp["vertex"])] += np.asarray(imp["vec"], float)

        def forcing(t):
            return by_step.get(t, np.zeros((model.n_vertices, 3)))

        return forcing
    if "pressures" in spec or "random_pressures" in spec:
        if not chambers:
            raise DomainError("pressure forcing requires chamber faces in the scene")
        if "pressures" in spec:
            sched = [np.asarray(row, float) for row in spec["pressures"]["schedule"]]
            seg = int(spec["pressures"].get("steps_per_segment", 1))
        else:
            rp = spec["random_pressures"]
            sched = [rng.uniform(0.0, float(rp.get("max", 1.0)), size=len(chambers))
                     for _ in range(int(rp["segments"]))]
            seg = int(rp["steps_per_segment"])

        def forcing(t, state):
            p = sched[min(t // seg, len(sched) - 1)]
            return ctl.chamber_forces(state.positions, chambers, p)

        return forcing
    raise DomainError(f"unknown forcing spec {sorted(spec)}")


def _initial_state(cfg, model):
    s0 = refsim.rest_state(model)
    vel = np.zeros_like(s0.velocities)
    for entry in cfg.get("initial_velocities", []):
        v, vec = int(entry[0]), np.asarray(entry[1:], float)
        vel[v] = vec
    if np.any(vel):
        s0 = refsim.FullState(s0.positions, vel)
    return s0


# -- commands -----------------------------------------------------------------

@main.command("gen-data")
@click.argument("out", type=click.Path(dir_okay=False))
@click.pass_context
@_classified
def gen_data(ctx, out):
    """Simulate the configured scene and write a snapshot file."""
    cfg = _load_config(ctx.obj["config_path"])
    rng = np.random.default_rng(ctx.obj["seed"])
    model, chambers = _build_scene(cfg)
    forcing = _build_forcing(cfg, model, chambers, rng)
    s0 = _initial_state(cfg, model)
    h, steps = float(cfg["h"]), int(cfg["steps"])
    snaps = refsim.simulate_trajectory(model, s0, h, steps, forcing=forcing)
    io.write_snapshots(out, snaps)
    click.echo(f"wrote {len(snaps.states)} frames ({model.n_vertices} vertices, "
               f"h={h}) to {out}")


@main.command("fit")
@click.argument("snapshots", type=click.Path(exists=True, dir_okay=False))
@click.argument("model_out", type=click.Path(dir_okay=False))
@click.option("--rank", type=int, default=None, help="Fixed-rank override.")
@click.option("--energy-target", type=float, default=dmdfit.DEFAULT_ENERGY,
              show_default=True, help="Singular-value energy retention target.")
@click.option("--clamp/--no-clamp", default=True, show_default=True,
              help="Rescale eigenvalues outside the unit disk onto the circle.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False),
              default=None, help="Write the JSON fit report here (default stdout).")
@_classified
def cmd_fit(snapshots, model_out, rank, energy_target, clamp, report_path):
    """Fit the low-rank propagator from a snapshot file."""
    snaps = io.read_snapshots(snapshots)
    opts = FitOptions(energy_target=energy_target, rank=rank, clamp_unit_disk=clamp)
    model, rep = dmdfit.fit(snaps, opts)
    io.write_model(model_out, model)
    report = {
        "rank": rep.rank,
        "singular_values": rep.singular_values.tolist(),
        "energy_profile": (np.cumsum(rep.singular_values**2)
                           / np.sum(rep.singular_values**2)).tolist(),
        "per_step_residual": rep.per_column_residual.tolist(),
        "mean_residual": rep.mean_residual,
        "max_eigenvalue_magnitude": rep.max_eigenvalue_magnitude,
        "n_clamped": rep.n_clamped,
        "mean_reconstruction_error": rep.mean_reconstruction_error,
    }
    text = json.dumps(report, indent=2)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


def _rollout_frames(model, x0, n_steps, mode):
    """All frames of an n-step rollout in the requested stepping mode."""
    frames = [x0]
    if mode == "sequential":
        x = x0
        for _ in range(n_steps):
            x = koopstep.step(model, x)
            frames.append(x)
    elif mode == "multistep":
        frames += [koopstep.multi_step(model, x0, t) for t in range(1, n_steps + 1)]
    else:  # real: advance the realified reduced coordinates sequentially
        op = koopstep.real_operator(model)
        z = dmdfit.project(model, x0)
        z_r = np.concatenate([np.real(z), np.imag(z)])
        for _ in range(n_steps):
            z_r = op.K_real @ z_r
            z_new = z_r[: model.rank] + 1j * z_r[model.rank:]
            frames.append(LiftedState(np.real(model.modes @ z_new)))
    return frames


@main.command("rollout")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--initial", "initial_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Snapshot file supplying the initial frame.")
@click.option("--frame", type=int, default=0, show_default=True,
              help="Index of the initial frame in the snapshot file.")
@click.option("-n", "--steps", type=int, required=True, help="Rollout length.")
@click.option("--multistep", "mode_multi", is_flag=True,
              help="Step by eigenvalue exponentiation (default).")
@click.option("--sequential", "mode_seq", is_flag=True,
              help="Step one transition at a time.")
@click.option("--real", "mode_real", is_flag=True,
              help="Step through the realified drift-free operator.")
@click.option("--h-rescale", type=float, default=None,
              help="Retarget the model to this step size before rolling out.")
@click.option("--damping", type=float, default=0.0, show_default=True,
              help="Uniform eigenvalue damping fraction.")
@click.option("--out", "traj_out", type=click.Path(dir_okay=False), default=None,
              help="Write the rollout as a snapshot file.")
@click.option("--ke", "ke_out", type=click.Path(dir_okay=False), default=None,
              help="Write a per-frame kinetic-energy CSV.")
@click.option("--mesh", "mesh_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Mesh supplying vertex masses for the KE CSV.")
@_classified
def cmd_rollout(model_path, initial_path, frame, steps, mode_multi, mode_seq,
                mode_real, h_rescale, damping, traj_out, ke_out, mesh_path):
    """Roll the fitted model forward and emit trajectory / energy files."""
    picked = [m for m, on in (("multistep", mode_multi), ("sequential", mode_seq),
                              ("real", mode_real)) if on]
    if len(picked) > 1:
        raise click.UsageError("--multistep, --sequential and --real are exclusive")
    mode = picked[0] if picked else "multistep"

    model = io.read_model(model_path)
    snaps = io.read_snapshots(initial_path)
    if not 0 <= frame < len(snaps.states):
        raise DomainError(f"frame {frame} out of range (file has {len(snaps.states)})")
    x0 = snaps.states[frame]
    if damping:
        model = koopstep.apply_damping(model, damping)
    if h_rescale is not None:
        model = koopstep.rescale_timestep(model, h_rescale)
    frames = _rollout_frames(model, x0, steps, mode)
    if traj_out:
        io.write_snapshots(traj_out, dmdfit.SnapshotSet(
            states=tuple(frames), h=model.h, rest_positions=snaps.rest_positions))
    if ke_out:
        masses = np.ones(model.n_vertices)
        if mesh_path:
            masses = io.read_mesh(mesh_path)[0].vertex_masses
        energies = [refsim.kinetic_energy(f, masses, model.h) for f in frames]
        io.write_ke_csv(ke_out, [i * model.h for i in range(len(frames))], energies)
    click.echo(f"rolled out {steps} steps ({mode}, h={model.h})")


def bench_table(model, elastic, x0, horizons, warmup=2):
    """Wall-time one N-step jump per mode and horizon.

    Modes: 'real-multistep' is a single realified jump (repeated-squaring
    exponentiation); 'refsim-sequential' integrates the full-space reference
    simulator step by step.  Returns {(mode, N): seconds}.
    """
    op = koopstep.real_operator(model)
    u, u_prev = x0.displacement, x0.displacement - x0.momentum
    n = model.n_vertices
    s0 = refsim.FullState(elastic.rest_positions + u.reshape(n, 3),
                          (x0.momentum / model.h).reshape(n, 3))
    results = {}
    for _ in range(warmup):
        koopstep.real_multi_step(op, model, x0, max(horizons))
    for N in horizons:
        t0 = time.perf_counter()
        koopstep.real_multi_step(op, model, x0, N)
        results[("real-multistep", N)] = time.perf_counter() - t0
    for _ in range(warmup):
        refsim.implicit_euler_step(elastic, s0, model.h)
    for N in horizons:
        s = s0
        t0 = time.perf_counter()
        for _ in range(N):
            s = refsim.implicit_euler_step(elastic, s, model.h)
        results[("refsim-sequential", N)] = time.perf_counter() - t0
    return results


@main.command("bench")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--mesh", "mesh_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Mesh for the full-space reference simulator timings.")
@click.option("-N", "--horizon", "horizons", type=int, multiple=True,
              default=(1000, 1000000), show_default=True)
@click.option("--out", "csv_out", type=click.Path(dir_okay=False), default=None,
              help="Write the timing table as CSV (default stdout).")
@_classified
def cmd_bench(model_path, mesh_path, horizons, csv_out):
    """Benchmark N-step jumps against sequential full-space stepping."""
    model = io.read_model(model_path)
    elastic, _ = io.read_mesh(mesh_path)
    if elastic.n_vertices != model.n_vertices:
        raise DimensionError("mesh and model vertex counts differ")
    x0 = LiftedState(np.zeros(model.dim))
    results = bench_table(model, elastic, x0, sorted(set(horizons)))
    lines = ["mode,N,seconds"]
    lines += [f"{mode},{N},{t!r}" for (mode, N), t in sorted(results.items())]
    text = "\n".join(lines) + "\n"
    if csv_out:
        with open(csv_out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@main.command("control")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--mesh", "mesh_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Mesh with chamber faces; also used for the validation replay.")
@click.option("--problem", "problem_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON problem: goal_dofs, goal, horizon, iterations, momentum_weight.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the result JSON here (default stdout).")
@_classified
def cmd_control(model_path, mesh_path, problem_path, out_path):
    """Solve for non-negative pressures and validate them in full space."""
    model = io.read_model(model_path)
    elastic, chambers = io.read_mesh(mesh_path)
    if not chambers:
        raise DomainError("mesh defines no chamber faces")
    with open(problem_path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    problem = ctl.ControlProblem(
        chambers=chambers,
        goal_dofs=np.asarray(spec["goal_dofs"], dtype=np.intp),
        goal=np.asarray(spec["goal"], float),
        horizon=int(spec["horizon"]),
        iterations=int(spec.get("iterations", 5)),
        momentum_weight=float(spec.get("momentum_weight", 1.0)),
    )
    x0 = LiftedState(np.zeros(model.dim))
    C, trace = ctl.solve_pressures(model, problem, x0,
                                   elastic.rest_positions, elastic.vertex_masses)
    replay = ctl.replay_pressures(elastic, chambers, C, model.h, problem.horizon)

    # reduced-model prediction per frame under the final force map
    A = ctl.pressure_force_map(elastic.rest_positions, elastic.vertex_masses,
                               trace[-1][1], chambers, model.h)
    zc, *_ = np.linalg.lstsq(model.modes, (A.A @ C).astype(np.complex128)[:, None],
                             rcond=None)
    preds = [np.real(model.modes @ (koopstep.propagator_sum(model, t) * zc[:, 0]))
             for t in range(1, problem.horizon + 1)]
    refs = [s.values for s in replay.states[1:]]
    frame_mse = io.percentage_mse(preds, refs, np.zeros(model.dim))
    valid = frame_mse[~np.isnan(frame_mse)]
    final = replay.states[-1].values
    result = {
        "pressures": C.tolist(),
        "predicted_goal": trace[-1][1].values[problem.goal_dofs].tolist(),
        "replayed_goal": final[problem.goal_dofs].tolist(),
        "goal": problem.goal.tolist(),
        "per_frame_percentage_mse": {
            "max": float(valid.max()) if valid.size else 0.0,
            "mean": float(valid.mean()) if valid.size else 0.0,
        },
    }
    text = json.dumps(result, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@main.command("serve")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mesh", "mesh_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--port", type=int, required=True)
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@_classified
def cmd_serve(model_path, mesh_path, port, host):
    """Serve interactive stepping/control sessions over TCP."""
    from . import service

    server = service.create_server(model_path, mesh_path, host=host, port=port)
    click.echo(f"listening on {host}:{server.server_address[1]}", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


if __name__ == "__main__":
    main()
