"""Command-line workflows: file outputs, manifests, exit codes, determinism."""

import json

import numpy as np
import pytest

from tmnet import basis, cli, io, lattice, maps, network, ode, systems

# frozen from the closed-form free-fall step map (see test_ode.py)
FF_W = (0.9798745270139799, 0.9996159383645234, -0.00039179927792022825)


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


def test_derive_free_fall_matches_closed_form(tmp_path):
    out = tmp_path / "ff.json"
    code = run("derive", "--system", "free_fall", "--param", "m=100",
               "--param", "g=9.8", "--param", "k=0.392",
               "--dt", "0.1", "--out", out)
    assert code == 0
    tm = io.load_map(out)
    assert tm.dim == 1 and tm.order == 2
    got = (tm.weights[0][0, 0], tm.weights[1][0, 0], tm.weights[2][0, 0])
    for g, w in zip(got, FF_W):
        assert g == pytest.approx(w, rel=1e-12)
    manifest = io.read_manifest(tmp_path / "ff.manifest.json")
    assert manifest.command == "derive"
    assert manifest.parameters["dt"] == 0.1
    assert manifest.tool_version


def test_derive_zero_rhs_gives_identity(tmp_path):
    zeros = ode.PolynomialODE(
        2, 2, tuple(np.zeros((2, basis.basis_size(2, d))) for d in range(3))
    )
    spec = tmp_path / "zero.json"
    io.save_ode(zeros, spec)
    out = tmp_path / "map.json"
    assert run("derive", "--ode", spec, "--dt", "0.5", "--out", out) == 0
    tm = io.load_map(out)
    ident = maps.identity_map(2, 2)
    for w, wi in zip(tm.weights, ident.weights):
        assert np.allclose(w, wi, atol=1e-15)


def test_simulate_identity_map_constant_rows(tmp_path):
    path = tmp_path / "ident.json"
    io.save_map(maps.identity_map(2, 2), path)
    out = tmp_path / "traj.csv"
    assert run("simulate", "--map", path, "--x0", "0.3,-0.4",
               "--steps", "5", "--out", out) == 0
    states = io.read_trajectory(out)
    assert states.shape == (6, 2)
    assert np.allclose(states, [0.3, -0.4])


def test_simulate_oracle_column_matches_analytic(tmp_path):
    out = tmp_path / "traj.csv"
    assert run("simulate", "--system", "free_fall", "--dt", "0.1",
               "--x0", "0", "--steps", "150", "--oracle", "--out", out) == 0
    data = io.read_trajectory(out)
    t = 0.1 * np.arange(151)
    analytic = systems.free_fall_analytic(t)
    assert np.max(np.abs(data[:, 1] - analytic)) < 1e-9  # RK4 reference column
    # order-2 map: truncation settles ~1% below terminal speed
    assert np.max(np.abs(data[:20, 0] - analytic[:20])) < 0.005
    assert np.max(np.abs(data[:, 0] - analytic)) < 0.5


def test_simulate_dimension_mismatch_fails(tmp_path):
    path = tmp_path / "ident.json"
    io.save_map(maps.identity_map(2, 2), path)
    out = tmp_path / "traj.csv"
    assert run("simulate", "--map", path, "--x0", "1", "--steps", "3",
               "--out", out) == 1
    assert not out.exists()


def test_train_zero_epochs_round_trips_weights(tmp_path):
    tm = ode.ode_to_map(systems.pendulum(), ode.FlowConfig(0.1))
    map_path = tmp_path / "init.json"
    io.save_map(tm, map_path)
    obs = systems.synthesize(systems.pendulum(), [0.1, 0.0], 0.1, 5)
    obs_path = tmp_path / "obs.csv"
    io.write_observations(obs, obs_path)
    out = tmp_path / "tuned.json"
    assert run("train", "--map", map_path, "--obs", obs_path, "--x0", "0.1,0",
               "--epochs", "0", "--out", out) == 0
    back = io.load_map(out)
    for w0, w1 in zip(tm.weights, back.weights):
        assert np.array_equal(w0, w1)
    history = io.read_loss_history(tmp_path / "tuned.loss.csv")
    assert history["total"].size == 0


def test_train_improves_loss_and_is_deterministic(tmp_path):
    ideal = ode.ode_to_map(systems.pendulum(L=0.3), ode.FlowConfig(0.1))
    map_path = tmp_path / "init.json"
    io.save_map(ideal, map_path)
    obs = systems.synthesize(systems.pendulum(L=0.28), [0.09, 0.0], 0.1, 10)
    obs_path = tmp_path / "obs.csv"
    io.write_observations(obs, obs_path)

    outputs = []
    for name in ("a", "b"):
        out = tmp_path / f"tuned_{name}.json"
        assert run("train", "--map", map_path, "--obs", obs_path,
                   "--x0", "0.09,0", "--epochs", "40", "--lr", "1e-3",
                   "--lambda", "1e-8", "--seed", "11", "--out", out) == 0
        history = io.read_loss_history(tmp_path / f"tuned_{name}.loss.csv")
        assert history["total"][-1] < history["total"][0]
        outputs.append(
            (out.read_bytes(), (tmp_path / f"tuned_{name}.loss.csv").read_bytes())
        )
    assert outputs[0] == outputs[1]
    stable_a = io.manifest_stable_view(tmp_path / "tuned_a.manifest.json")
    stable_b = io.manifest_stable_view(tmp_path / "tuned_b.manifest.json")
    stable_a["parameters"]["out"] = stable_b["parameters"]["out"] = ""
    assert stable_a == stable_b


def test_track_and_tunes_workflow(tmp_path):
    lat = lattice.Lattice(
        elements=[lattice.rotation_element("r1", 0.28, 0.19)],
        monitors=(1,),
    )
    lat_path = tmp_path / "ring.json"
    io.save_lattice(lat, lat_path)
    series_path = tmp_path / "turns.csv"
    assert run("track", "--lattice", lat_path, "--x0", "1e-3,0,1e-3,0",
               "--turns", "512", "--out", series_path) == 0
    series = io.read_turn_series(series_path)
    assert series.n_turns == 512
    tunes_path = tmp_path / "tunes.json"
    assert run("tunes", "--series", series_path, "--out", tunes_path) == 0
    report = json.loads(tunes_path.read_text())
    assert report["qx"] == pytest.approx(0.28, abs=1e-3)
    assert report["qy"] == pytest.approx(0.19, abs=1e-3)
    assert not report["degenerate_x"] and not report["degenerate_y"]


def test_tunes_constant_series_degenerate(tmp_path):
    series_path = tmp_path / "turns.csv"
    io.write_turn_series(
        lattice.TurnSeries(states=np.tile([0.5, 0.0, -0.25, 0.0], (70, 1))),
        series_path,
    )
    tunes_path = tmp_path / "tunes.json"
    assert run("tunes", "--series", series_path, "--out", tunes_path) == 0
    report = json.loads(tunes_path.read_text())
    assert report["qx"] == 0.0 and report["degenerate_x"]
    assert report["qy"] == 0.0 and report["degenerate_y"]


def test_check_reports(tmp_path):
    ident_path = tmp_path / "ident.json"
    io.save_map(maps.identity_map(4, 2), ident_path)
    out = tmp_path / "report.json"
    assert run("check", "--map", ident_path, "--out", out) == 0
    assert json.loads(out.read_text())["penalty"] == 0.0

    rot_path = tmp_path / "rot.json"
    io.save_map(lattice.rotation_element("r", 0.13, 0.29).tm, rot_path)
    assert run("check", "--map", rot_path, "--out", out) == 0
    assert json.loads(out.read_text())["penalty"] <= 1e-12

    scaled = maps.identity_map(2, 2)
    ws = [w.copy() for w in scaled.weights]
    ws[1] = 2.0 * ws[1]
    io.save_map(maps.TaylorMap(dim=2, order=2, weights=tuple(ws)), rot_path)
    assert run("check", "--map", rot_path, "--out", out) == 0
    assert json.loads(out.read_text())["penalty"] > 0.0


def test_error_exits(tmp_path):
    out = tmp_path / "x.json"
    assert run("derive", "--system", "nope", "--dt", "0.1", "--out", out) == 1
    assert run("derive", "--system", "free_fall", "--param", "m",
               "--dt", "0.1", "--out", out) == 1
    assert run("derive", "--dt", "0.1", "--out", out) == 1
    assert run("track", "--lattice", tmp_path / "missing.json",
               "--x0", "0,0,0,0", "--turns", "5", "--out", out) == 1


def test_divergent_simulation_exits_nonzero(tmp_path):
    ws = [np.zeros((1, 1)) for _ in range(3)]
    ws[1][0, 0] = 1.0
    ws[2][0, 0] = 4.0
    path = tmp_path / "blow.json"
    io.save_map(maps.TaylorMap(dim=1, order=2, weights=tuple(ws)), path)
    out = tmp_path / "traj.csv"
    assert run("simulate", "--map", path, "--x0", "3",
               "--steps", "60", "--out", out) == 1
