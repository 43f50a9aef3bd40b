"""Command-line toolchain: formats, determinism, mode agreement, exit codes."""
from __future__ import annotations

import json

import numpy as np
import pytest
from click.testing import CliRunner

from koopdyn import cli, io
from koopdyn.errors import ConvergenceError, DomainError, IllConditionedError


@pytest.fixture()
def runner():
    return CliRunner()


def oscillator_mesh(tmp_path):
    mesh = tmp_path / "osc.mesh"
    mesh.write_text("v 0 0 0\nv 1 0 0\ns 0 1 50.0\nf 0\nmv 0 1.0\nmv 1 0.5\n")
    return mesh


def write_config(tmp_path, **cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_gen_data_matches_one_dof_closed_form(runner, tmp_path):
    """Oracle: the 1-DOF implicit-Euler recursion in closed form."""
    mesh = oscillator_mesh(tmp_path)
    cfg = write_config(tmp_path, mesh=str(mesh), linearized=True, h=0.01,
                       steps=50, initial_velocities=[[1, -0.3, 0.0, 0.0]])
    out = tmp_path / "osc.kpss"
    result = runner.invoke(cli.main, ["--config", str(cfg), "gen-data", str(out)])
    assert result.exit_code == 0, result.output
    snaps = io.read_snapshots(out)
    k, m, h = 50.0, 0.5, 0.01
    x, v = 0.0, -0.3
    for t in range(50):
        v = (m * v - h * k * x) / (m + h * h * k)
        x = x + h * v
        assert snaps.states[t + 1].displacement[3] == pytest.approx(x, abs=1e-12)


def test_gen_data_rest_zero_forcing_all_frames_identical(runner, tmp_path):
    cfg = write_config(tmp_path, scenario={"name": "chain", "params": {"n": 4}},
                       h=0.01, steps=5)
    out = tmp_path / "rest.kpss"
    assert runner.invoke(cli.main, ["--config", str(cfg), "gen-data",
                                    str(out)]).exit_code == 0
    snaps = io.read_snapshots(out)
    for s in snaps.states:
        np.testing.assert_array_equal(s.values, snaps.states[0].values)


def test_gen_data_is_deterministic_per_seed(runner, tmp_path):
    cfg = write_config(
        tmp_path,
        scenario={"name": "pneumatic_beam", "params": {"layers": 2}},
        h=0.02, steps=12,
        forcing={"random_pressures": {"segments": 3, "steps_per_segment": 4,
                                      "max": 2.0}})
    outs = []
    for name, seed in (("a", 9), ("b", 9), ("c", 10)):
        out = tmp_path / f"{name}.kpss"
        assert runner.invoke(cli.main, ["--config", str(cfg), "--seed", str(seed),
                                        "gen-data", str(out)]).exit_code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


@pytest.fixture()
def chain_files(runner, tmp_path):
    cfg = write_config(tmp_path, scenario={"name": "chain", "params": {"n": 6}},
                       linearized=True, h=0.01, steps=120,
                       initial_velocities=[[5, 0.2, 0.1, -0.1], [3, -0.1, 0.2, 0.0]])
    snaps = tmp_path / "chain.kpss"
    model = tmp_path / "chain.kpdm"
    report = tmp_path / "report.json"
    assert runner.invoke(cli.main, ["--config", str(cfg), "gen-data",
                                    str(snaps)]).exit_code == 0
    assert runner.invoke(cli.main, ["fit", str(snaps), str(model), "--rank", "36",
                                    "--report", str(report)]).exit_code == 0
    return snaps, model, report


def test_fit_report_on_linear_data(chain_files):
    _, _, report_path = chain_files
    report = json.loads(report_path.read_text())
    assert report["mean_residual"] <= 1e-6
    assert report["max_eigenvalue_magnitude"] <= 1.0 + 1e-12
    assert report["energy_profile"][-1] == pytest.approx(1.0)
    assert len(report["singular_values"]) == report["rank"]


def test_rollout_modes_agree(runner, tmp_path, chain_files):
    snaps, model, _ = chain_files
    outs = {}
    for mode in ("--sequential", "--multistep", "--real"):
        out = tmp_path / f"roll{mode}.kpss"
        res = runner.invoke(cli.main, ["rollout", str(model), "--initial",
                                       str(snaps), "-n", "10", mode,
                                       "--out", str(out)])
        assert res.exit_code == 0, res.output
        outs[mode] = io.read_snapshots(out)
    seq = outs["--sequential"].states
    for mode in ("--multistep", "--real"):
        for a, b in zip(seq, outs[mode].states):
            assert np.abs(a.values - b.values).max() <= 1e-8


def test_rollout_damping_zero_is_identity(runner, tmp_path, chain_files):
    snaps, model, _ = chain_files
    a, b = tmp_path / "a.kpss", tmp_path / "b.kpss"
    base = ["rollout", str(model), "--initial", str(snaps), "-n", "10"]
    assert runner.invoke(cli.main, base + ["--out", str(a)]).exit_code == 0
    assert runner.invoke(cli.main, base + ["--damping", "0", "--out",
                                           str(b)]).exit_code == 0
    assert a.read_bytes() == b.read_bytes()


def test_rollout_h_rescale_matches_subsampled(runner, tmp_path, chain_files):
    snaps, model, _ = chain_files
    a, b = tmp_path / "a.kpss", tmp_path / "b.kpss"
    assert runner.invoke(cli.main, ["rollout", str(model), "--initial", str(snaps),
                                    "-n", "5", "--h-rescale", "0.02",
                                    "--out", str(a)]).exit_code == 0
    assert runner.invoke(cli.main, ["rollout", str(model), "--initial", str(snaps),
                                    "-n", "10", "--out", str(b)]).exit_code == 0
    coarse = io.read_snapshots(a)
    fine = io.read_snapshots(b)
    assert coarse.h == pytest.approx(0.02)
    for t in range(6):
        np.testing.assert_allclose(coarse.states[t].values,
                                   fine.states[2 * t].values, atol=1e-8)


def test_rollout_mode_flags_are_exclusive(runner, tmp_path, chain_files):
    snaps, model, _ = chain_files
    res = runner.invoke(cli.main, ["rollout", str(model), "--initial", str(snaps),
                                   "-n", "5", "--sequential", "--real"])
    assert res.exit_code == 2


def test_rollout_emits_ke_csv(runner, tmp_path, chain_files):
    snaps, model, _ = chain_files
    ke = tmp_path / "ke.csv"
    assert runner.invoke(cli.main, ["rollout", str(model), "--initial", str(snaps),
                                    "-n", "10", "--ke", str(ke)]).exit_code == 0
    times, energies = io.read_ke_csv(ke)
    assert times.size == 11 and np.all(energies >= 0)


def test_bench_emits_timing_table(runner, tmp_path, chain_files):
    _, model, _ = chain_files
    mesh = tmp_path / "chain.mesh"
    from koopdyn import scenarios
    mesh.write_text(io.format_mesh(scenarios.chain(n=6).linearize()))
    out = tmp_path / "bench.csv"
    res = runner.invoke(cli.main, ["bench", str(model), "--mesh", str(mesh),
                                   "-N", "1", "-N", "64", "--out", str(out)])
    assert res.exit_code == 0, res.output
    lines = out.read_text().splitlines()
    assert lines[0] == "mode,N,seconds"
    rows = {tuple(l.split(",")[:2]): float(l.split(",")[2]) for l in lines[1:]}
    assert set(rows) == {("real-multistep", "1"), ("real-multistep", "64"),
                         ("refsim-sequential", "1"), ("refsim-sequential", "64")}
    assert all(t >= 0.0 for t in rows.values())


def test_control_trivial_rest_goal_gives_zero_pressures(runner, tmp_path):
    from koopdyn import scenarios, refsim, dmdfit
    import koopdyn.control as ctl
    elastic, chambers = scenarios.pneumatic_beam(layers=2, stiffness=200.0)
    rng = np.random.default_rng(1)
    sched = [rng.uniform(0, 3, 3) for _ in range(3)]

    def forcing(t, state):
        return ctl.chamber_forces(state.positions, chambers, sched[min(t // 20, 2)])

    snaps = refsim.simulate_trajectory(elastic, refsim.rest_state(elastic),
                                       0.02, 60, forcing=forcing)
    model, _ = dmdfit.fit(snaps, dmdfit.FitOptions(rank=8))
    mesh = tmp_path / "beam.mesh"
    mesh.write_text(io.format_mesh(elastic, chambers))
    model_path = tmp_path / "beam.kpdm"
    io.write_model(model_path, model)
    problem = tmp_path / "problem.json"
    problem.write_text(json.dumps({"goal_dofs": [0, 1, 2], "goal": [0, 0, 0],
                                   "horizon": 50}))
    out = tmp_path / "ctl.json"
    res = runner.invoke(cli.main, ["control", str(model_path), "--mesh", str(mesh),
                                   "--problem", str(problem), "--out", str(out)])
    assert res.exit_code == 0, res.output
    result = json.loads(out.read_text())
    np.testing.assert_allclose(result["pressures"], 0.0, atol=1e-8)


def test_exit_codes(runner, tmp_path):
    # usage: unknown command / missing required args
    assert runner.invoke(cli.main, ["frobnicate"]).exit_code == 2
    assert runner.invoke(cli.main, ["rollout"]).exit_code == 2
    # data: missing config, malformed file
    assert runner.invoke(cli.main, ["gen-data", str(tmp_path / "o.kpss")]).exit_code == 3
    bad = tmp_path / "bad.kpss"
    bad.write_bytes(b"NOPE" + b"\x00" * 32)
    assert runner.invoke(cli.main, ["fit", str(bad),
                                    str(tmp_path / "m.kpdm")]).exit_code == 3


def test_error_classifier_maps_exception_families():
    @cli._classified
    def numerical():
        raise ConvergenceError("diverged", residual=1.0)

    @cli._classified
    def data():
        raise DomainError("bad mesh")

    @cli._classified
    def ill():
        raise IllConditionedError("cond")

    for fn, code in ((numerical, 4), (data, 3), (ill, 4)):
        with pytest.raises(SystemExit) as exc:
            fn()
        assert exc.value.code == code
