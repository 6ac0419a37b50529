"""Batch command line: derive / simulate / train / track / tunes / check.

Every command reads files, writes files, and emits a manifest next to the
primary output (same stem, `.manifest.json`).  Exit code 0 means all outputs
were written and finite; parse errors, divergence, and invalid inputs exit
nonzero with a message on stderr.  No plotting: outputs are tidy CSV/JSON.
"""

import argparse
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

import tmnet
from tmnet import io, lattice, maps, network, ode, systems


def _parse_params(pairs) -> dict:
    params = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--param needs k=v, got {pair!r}")
        key, _, value = pair.partition("=")
        params[key.strip()] = float(value)
    return params


def _parse_x0(text: str) -> np.ndarray:
    try:
        return np.array([float(f) for f in text.split(",")], dtype=float)
    except ValueError as exc:
        raise ValueError(f"--x0 must be comma-separated numbers, got {text!r}") from exc


def _resolve_system(args) -> tuple[ode.PolynomialODE, dict]:
    """The generating ODE from --system/--param or --ode, plus input digests."""
    if getattr(args, "system", None):
        if args.system not in systems.SYSTEMS:
            known = ", ".join(sorted(systems.SYSTEMS))
            raise ValueError(f"unknown system {args.system!r} (known: {known})")
        params = _parse_params(args.param)
        return systems.SYSTEMS[args.system](**params), {}
    if getattr(args, "ode", None):
        return io.load_ode(args.ode), {args.ode: io.sha256_file(args.ode)}
    raise ValueError("need --system NAME or --ode path")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def _emit_manifest(command: str, args: argparse.Namespace, inputs: dict,
                   out: Path, started: float, seed=None) -> None:
    parameters = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        if isinstance(value, np.ndarray):
            value = [float(v) for v in value]
        parameters[key] = value
    manifest = io.RunManifest(
        command=command,
        parameters=parameters,
        inputs=inputs,
        seed=seed,
        tool_version=tmnet.__version__,
        duration_seconds=time.time() - started,
        created_utc=datetime.now(timezone.utc).isoformat(),
    )
    io.write_manifest(manifest, _manifest_path(out))


def cmd_derive(args) -> int:
    started = time.time()
    system, inputs = _resolve_system(args)
    tm = ode.ode_to_map(system, ode.FlowConfig(args.dt, substeps=args.substeps))
    out = Path(args.out)
    io.save_map(tm, out)
    _emit_manifest("derive", args, inputs, out, started)
    print(f"derived order-{tm.order} map (dim {tm.dim}) -> {out}")
    return 0


def cmd_simulate(args) -> int:
    started = time.time()
    inputs = {}
    if args.map:
        tm = io.load_map(args.map)
        inputs[args.map] = io.sha256_file(args.map)
        system = None
        if args.system or args.ode:
            system, more = _resolve_system(args)
            inputs.update(more)
    else:
        system, inputs = _resolve_system(args)
        if args.dt is None:
            raise ValueError("simulating from an ODE needs --dt")
        tm = ode.ode_to_map(system, ode.FlowConfig(args.dt, substeps=args.substeps))
    X0 = _parse_x0(args.x0)
    if X0.shape != (tm.dim,):
        raise ValueError(f"--x0 has {X0.size} components, map has dim {tm.dim}")

    predicted = network.predict_trajectory(
        network.build_shared_chain(tm, args.steps), X0
    )
    states = np.vstack([X0[np.newaxis, :], predicted])
    extra = None
    if args.oracle:
        if system is None:
            raise ValueError("--oracle needs the generating ODE (--system/--ode)")
        if args.dt is None:
            raise ValueError("--oracle needs --dt")
        ref = ode.reference_trajectory(system, X0, args.dt, args.steps)
        extra = {f"ref_x{i + 1}": ref[:, i] for i in range(ref.shape[1])}
    out = Path(args.out)
    io.write_trajectory(states, out, extra=extra)
    _emit_manifest("simulate", args, inputs, out, started)
    print(f"simulated {args.steps} steps -> {out}")
    return 0


def cmd_train(args) -> int:
    started = time.time()
    inputs = {args.obs: io.sha256_file(args.obs)}
    obs = io.read_observations(args.obs)
    if args.map:
        tm = io.load_map(args.map)
        inputs[args.map] = io.sha256_file(args.map)
    else:
        if args.dim is None or args.order is None:
            raise ValueError("need --map, or --dim and --order for identity init")
        tm = maps.identity_map(args.dim, args.order)
    layers = args.layers if args.layers is not None else max(obs.taps)
    net = network.build_shared_chain(tm, layers, taps=obs.taps)
    X0 = _parse_x0(args.x0)
    degrees = None
    if args.train_degrees:
        degrees = tuple(int(d) for d in args.train_degrees.split(","))
    cfg = network.TrainConfig(
        step_size=args.lr, clip_norm=args.clip, epochs=args.epochs,
        penalty_rate=getattr(args, "lambda"), seed=args.seed,
        schedule=args.schedule, train_degrees=degrees,
        teacher_forcing=args.teacher_forcing,
    )
    trained, report = network.train_one_shot(net, X0, obs, cfg)
    out = Path(args.out)
    io.save_map(trained.group_maps[0], out)
    io.write_loss_history(report, out.with_name(out.stem + ".loss.csv"))
    _emit_manifest("train", args, inputs, out, started, seed=args.seed)
    if args.epochs > 0:
        print(f"trained {args.epochs} epochs: loss {report.total[0]:.6e} -> "
              f"{report.total[-1]:.6e} -> {out}")
    else:
        print(f"trained 0 epochs: weights unchanged -> {out}")
    return 0


def cmd_track(args) -> int:
    started = time.time()
    inputs = {args.lattice: io.sha256_file(args.lattice)}
    lat = io.load_lattice(args.lattice)
    X0 = _parse_x0(args.x0)
    series = lattice.multi_turn(lat, X0, args.turns)
    out = Path(args.out)
    io.write_turn_series(series, out)
    _emit_manifest("track", args, inputs, out, started)
    print(f"tracked {args.turns} turns -> {out}")
    return 0


def cmd_tunes(args) -> int:
    started = time.time()
    inputs = {args.series: io.sha256_file(args.series)}
    series = io.read_turn_series(args.series)
    est = lattice.estimate_tunes(series)
    out = Path(args.out)
    io._dump_json(
        {"qx": est.qx, "qy": est.qy,
         "degenerate_x": est.degenerate_x, "degenerate_y": est.degenerate_y},
        out,
    )
    _emit_manifest("tunes", args, inputs, out, started)
    print(f"Qx={est.qx:.6f}{' (degenerate)' if est.degenerate_x else ''} "
          f"Qy={est.qy:.6f}{' (degenerate)' if est.degenerate_y else ''}")
    return 0


def cmd_check(args) -> int:
    started = time.time()
    inputs = {args.map: io.sha256_file(args.map)}
    tm = io.load_map(args.map)
    res = maps.symplectic_residual(tm)
    report = {
        "dim": tm.dim,
        "order": tm.order,
        "penalty": maps.symplectic_penalty(tm),
        "max_abs_residual": res.max_abs(),
        "max_abs_by_degree": [float(np.max(np.abs(c))) for c in res.coefficients],
    }
    out = Path(args.out)
    io._dump_json(report, out)
    _emit_manifest("check", args, inputs, out, started)
    print(f"symplectic penalty {report['penalty']:.6e} "
          f"(max residual {report['max_abs_residual']:.6e})")
    return 0


def _add_system_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--system", help="built-in system name")
    p.add_argument("--param", action="append", metavar="K=V",
                   help="system parameter override (repeatable)")
    p.add_argument("--ode", help="path to a polynomial-ODE JSON spec")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tmnet",
        description="Polynomial Taylor-map models of dynamical systems: "
                    "derive from ODEs, simulate, fine-tune from one trajectory, "
                    "track rings, estimate tunes.",
    )
    parser.add_argument("--version", action="version", version=tmnet.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="build a Taylor map from a polynomial ODE")
    _add_system_flags(p)
    p.add_argument("--dt", type=float, required=True, help="map time step")
    p.add_argument("--substeps", type=int, default=1000)
    p.add_argument("--out", required=True, help="output map JSON path")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("simulate", help="iterate a map (optionally vs RK4 reference)")
    p.add_argument("--map", help="map JSON (otherwise derive from --system/--ode)")
    _add_system_flags(p)
    p.add_argument("--dt", type=float, help="step for deriving / oracle reference")
    p.add_argument("--substeps", type=int, default=1000)
    p.add_argument("--x0", required=True, help="initial state a,b,...")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--oracle", action="store_true",
                   help="append dense RK4 reference columns")
    p.add_argument("--out", required=True, help="output trajectory CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fine-tune a shared-map chain on observations")
    p.add_argument("--map", help="initial map JSON")
    p.add_argument("--dim", type=int, help="identity init: state dimension")
    p.add_argument("--order", type=int, help="identity init: map order")
    p.add_argument("--layers", type=int, help="chain length (default: last tap)")
    p.add_argument("--obs", required=True, help="observations CSV")
    p.add_argument("--x0", required=True, help="known initial state a,b,...")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--schedule", choices=("constant", "cosine"),
                   default="constant", help="learning-rate schedule")
    p.add_argument("--train-degrees", default="",
                   help="comma list of weight degrees to update (default all)")
    p.add_argument("--teacher-forcing", action="store_true",
                   help="fit one-step pairs of a fully observed series")
    p.add_argument("--lambda", type=float, default=1e-10, dest="lambda",
                   help="symplectic penalty rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output tuned-map JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="multi-turn tracking of a ring lattice")
    p.add_argument("--lattice", required=True, help="lattice JSON")
    p.add_argument("--x0", required=True, help="initial state x,xp,y,yp")
    p.add_argument("--turns", type=int, required=True)
    p.add_argument("--out", required=True, help="output turn-series CSV path")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("tunes", help="main per-plane frequencies of a turn series")
    p.add_argument("--series", required=True, help="turn-series CSV")
    p.add_argument("--out", required=True, help="output tunes JSON path")
    p.set_defaults(func=cmd_tunes)

    p = sub.add_parser("check", help="symplectic-penalty report for a map")
    p.add_argument("--map", required=True, help="map JSON")
    p.add_argument("--out", required=True, help="output report JSON path")
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError,
            ode.FlowDivergenceError, network.TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
