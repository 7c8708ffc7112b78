"""Command-line driver: ``sdmanifold <command> --config run.json [--out DIR] [--jobs K]``.

Exit codes: 0 success, 1 numerical failure, 2 configuration error,
3 missing input artifact, 4 CSV/JSON schema mismatch.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig
from .errors import ConfigError, MissingArtifactError, SchemaError, SdmError
from .hamiltonian import Trajectory, backward_trajectory
from .riccati import local_lq
from .shooting import seed_and_shoot
from .simulate import SimResult, closed_loop, replay_trajectory, world_frame_reconstruct
from .svgplot import series_plot, world_plot
from .synthesis import ControlLaw, fit_polynomial_law, generate_cloud

EXIT_NUMERIC, EXIT_CONFIG, EXIT_MISSING, EXIT_SCHEMA = 1, 2, 3, 4


# ---------------------------------------------------------------- artifacts


def _num(v) -> str:
    return repr(float(v))


def write_trajectory_csv(path, traj: Trajectory, h: float) -> None:
    """Rows k = 0..N; input and solver columns are blank at k = N."""
    n, m = traj.x.shape[1], traj.u.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "t"] + [f"x{i + 1}" for i in range(n)] + [f"u{a + 1}" for a in range(m)]
                   + [f"p{i + 1}" for i in range(n)] + ["newton_iters", "residual"])
        for k in range(traj.N + 1):
            if k < traj.N:
                tail = [_num(v) for v in traj.u[k]]
                solver = [int(traj.newton_iters[k]), _num(traj.residuals[k])]
            else:
                tail, solver = [""] * m, ["", ""]
            w.writerow([k, _num(k * h)] + [_num(v) for v in traj.x[k]] + tail
                       + [_num(v) for v in traj.p[k]] + solver)


def _objective_dict(sim: SimResult) -> dict:
    def part(o):
        return {"total": o.total, "state": o.state_part, "input": o.input_part}
    return {"sampled": part(sim.cost_sampled), "intersample": part(sim.cost_intersample),
            "terminal_estimate": sim.terminal_estimate}


def _dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: RunConfig, command: str, artifacts: list[Path]) -> None:
    """Merge this command's entry into ``manifest.json``; no timestamps by design."""
    path = out / "manifest.json"
    data = {}
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError:
            data = {}
    data["config"] = cfg.to_dict()
    data["config_sha256"] = cfg.digest()
    data["versions"] = {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__, "sdmanifold": __version__}
    runs = data.setdefault("runs", {})
    runs[command] = {"config_sha256": cfg.digest(),
                     "artifacts": {p.name: _sha256(p) for p in sorted(artifacts)}}
    _dump_json(path, data)


# ---------------------------------------------------------------- commands


def _setup(cfg: RunConfig):
    plant = cfg.build_plant()
    spec = cfg.build_cost(plant)
    return plant, spec, local_lq(plant, spec)


def cmd_riccati(cfg: RunConfig, out: Path, args) -> int:
    plant, spec, lq = _setup(cfg)
    d = {"mode": spec.mode.value, "h": spec.h, "M": spec.M, **lq.solution.as_dict(),
         "A_h": lq.dl.A_h.tolist(), "B_h": lq.dl.B_h.tolist()}
    print(json.dumps(d, indent=2, sort_keys=True))
    path = out / "riccati.json"
    _dump_json(path, d)
    write_manifest(out, cfg, "riccati", [path])
    return 0


def cmd_trace(cfg: RunConfig, out: Path, args) -> int:
    plant, spec, lq = _setup(cfg)
    x_N = np.zeros(plant.n) if cfg.x_N is None else np.asarray(cfg.x_N, dtype=float)
    traj = backward_trajectory(plant, spec, x_N, cfg.N, cfg.build_newton(), lq=lq,
                               terminal_radius=cfg.terminal_radius)
    path = out / "trace.csv"
    write_trajectory_csv(path, traj, spec.h)
    write_manifest(out, cfg, "trace", [path])
    print(f"wrote {path}")
    return 0


def _shoot_reference(cfg, plant, spec, lq, on_update=None) -> Trajectory:
    return seed_and_shoot(plant, spec, np.asarray(cfg.target, dtype=float), cfg.N,
                          cfg.build_shooting(), cfg.build_newton(), lq=lq,
                          terminal_radius=cfg.terminal_radius, on_update=on_update)


def cmd_shoot(cfg: RunConfig, out: Path, args) -> int:
    plant, spec, lq = _setup(cfg)
    print("update,distance,halvings")

    def report(update, dist, halvings):
        print(f"{update},{dist:.6e},{halvings}", flush=True)

    traj = _shoot_reference(cfg, plant, spec, lq, on_update=report)
    paths = [out / "shoot.csv", out / "shoot_log.csv", out / "shoot_costs.json"]
    write_trajectory_csv(paths[0], traj, spec.h)
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "update", "distance", "halvings"])
        for stage, upd, dist, halv in traj.meta["shoot_log"]:
            w.writerow([stage, upd, _num(dist), halv])
    replay = replay_trajectory(plant, spec, traj)
    costs = _objective_dict(replay)
    costs.update(mode=spec.mode.value, updates=traj.meta["updates"], distance=traj.meta["distance"])
    _dump_json(paths[2], costs)
    write_manifest(out, cfg, "shoot", paths)
    return 0


def cmd_synthesize(cfg: RunConfig, out: Path, args) -> int:
    plant, spec, lq = _setup(cfg)
    s = cfg.synthesis
    seeds = None
    if s.base_targets == "reference":
        ref = _shoot_reference(cfg, plant, spec, lq)
        k_max = min(s.reference_points, ref.N)
        bases = [ref.x[k] for k in range(k_max)]
        seeds = [ref.tail(k) for k in range(k_max)]
        if s.include_origin:
            bases.append(np.zeros(plant.n))
            seeds.append(None)
    else:
        bases = [np.asarray(b, dtype=float) for b in s.base_targets]
        if any(b.shape != (plant.n,) for b in bases):
            raise ConfigError(f"synthesis.base_targets entries must have length {plant.n}")
    cloud = generate_cloud(plant, spec, np.array(bases), s.noise_std, s.per_target, s.seed, cfg.N,
                           cfg.build_shooting(target_tol=s.shot_tol), cfg.build_newton(), lq=lq,
                           seeds=seeds, terminal_radius=cfg.terminal_radius, jobs=args.jobs)
    law = fit_polynomial_law(cloud, s.degree)
    paths = [out / "cloud.csv", out / "law.json", out / "synthesis.json"]
    cloud.to_csv(paths[0])
    law.to_json(paths[1])
    report = {"pairs": len(cloud), "shots": len(cloud.targets), "failed": list(map(int, cloud.failed)),
              "success_rate": cloud.success_rate, "fit_residual": law.fit_residual,
              "fit_threshold": s.fit_threshold, "degree": s.degree}
    _dump_json(paths[2], report)
    write_manifest(out, cfg, "synthesize", paths)
    print(f"{len(cloud)} pairs from {len(cloud.targets) - len(cloud.failed)}/{len(cloud.targets)} shots; "
          f"fit RMS {law.fit_residual:.3e}")
    if law.fit_residual > s.fit_threshold:
        print(f"error: fit RMS {law.fit_residual:.3e} exceeds threshold {s.fit_threshold:.3e}",
              file=sys.stderr)
        return EXIT_NUMERIC
    return 0


def load_law(path) -> ControlLaw:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"control law file not found: {path} (run 'synthesize' first)")
    try:
        return ControlLaw.from_json(path)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed control law file {path}: {exc}") from None


def cmd_simulate(cfg: RunConfig, out: Path, args) -> int:
    sim_cfg = cfg.simulate
    law = load_law(sim_cfg.law if sim_cfg.law is not None else out / "law.json")
    plant, spec, lq = _setup(cfg)
    if law.state_dim != plant.n or law.input_dim != plant.m:
        raise SchemaError("control law dimensions do not match the plant")
    sim = closed_loop(plant, spec, law, cfg.sim_x0, sim_cfg.steps, sim_cfg.meas_noise_std,
                      sim_cfg.seed, S=lq.S)
    paths = [out / "sim.csv", out / "sim_costs.csv", out / "simulate.json"]
    sim.to_csv(paths[0])
    sim.costs_to_csv(paths[1])
    summary = _objective_dict(sim)
    summary["final_norm"] = float(np.linalg.norm(sim.x[-1]))
    summary["norms"] = [float(v) for v in np.linalg.norm(sim.x, axis=1)]
    _dump_json(paths[2], summary)
    if plant.name == "unicycle":
        world = world_frame_reconstruct(sim, plant.params["v_r"], plant.params["omega_r"],
                                        sim_cfg.initial_pose)
        paths.append(out / "world.csv")
        world.to_csv(paths[-1])
    write_manifest(out, cfg, "simulate", paths)
    print(f"final |x| = {summary['final_norm']:.3e}")
    return 0


def _read_csv(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"CSV file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], {}
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) if r[j] != "" else np.nan for r in body])
        except (ValueError, IndexError):
            raise SchemaError(f"{path}: column '{name}' is not numeric") from None
    return header, cols


def cmd_plot(args) -> int:
    header, cols = _read_csv(args.csv)
    kind = args.kind
    src = Path(args.csv)
    out = Path(args.out) if args.out else src.parent
    out.mkdir(parents=True, exist_ok=True)
    xs = [c for c in header if c[:1] == "x" and c[1:].isdigit()]
    if kind == "world":
        need = ["t", "xc", "yc", "thetac"]
        if header and header != need:
            raise SchemaError(f"world plot needs columns {need}, got {header}")
        e = np.zeros(0)
        svg = world_plot(cols.get("t", e), cols.get("xc", e), cols.get("yc", e), cols.get("thetac", e),
                         args.period)
    else:
        axis = "t" if kind == "state" else "k"
        if header and (axis not in header or not xs):
            raise SchemaError(f"{kind} plot needs a '{axis}' column and state columns x1..xn")
        svg = series_plot(cols.get(axis, np.zeros(0)), {c: cols[c] for c in xs},
                          f"{kind}: {src.stem}", xlabel=axis)
    path = out / f"{src.stem}_{kind}.svg"
    path.write_text(svg)
    print(f"wrote {path}")
    return 0


COMMANDS = {"riccati": cmd_riccati, "trace": cmd_trace, "shoot": cmd_shoot,
            "synthesize": cmd_synthesize, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdmanifold", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for cloud generation")
    p = sub.add_parser("plot")
    p.add_argument("csv", help="input CSV")
    p.add_argument("--kind", choices=["state", "trajectory", "world"], default="state")
    p.add_argument("--out", help="output directory (default: next to the CSV)")
    p.add_argument("--period", type=float, default=1.0, help="sampling period for world-plot markers")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            return cmd_plot(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.config is None:
            cfg.validate()
        out = Path(args.out if args.out else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (SdmError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
