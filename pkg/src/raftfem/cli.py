"""Command-line driver: ``run``, ``sweep``, ``verify`` and ``mesh-info``."""

from __future__ import annotations

import argparse
import copy
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import Config, apply_overrides, default_config, dump_config, load_config
from .errors import RaftFEMError

log = logging.getLogger("raftfem")


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else default_config()
    cfg = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out is not None:
        cfg.output.directory = args.out
    return cfg


def simulate(cfg: Config, out: Path | None = None, echo=None):
    """Run one simulation, streaming the CSV log and VTK snapshots into ``out``."""
    from .dynamics import run
    from .output import CSVLogger, write_vtk_snapshot

    logger = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dump_config(cfg))
        if cfg.output.csv:
            logger = CSVLogger(out / "log.csv")
    rho = cfg.params.rho_vis
    every = cfg.output.every

    def callback(state, rec):
        if logger:
            logger.write(rec)
        if out is not None and cfg.output.vtk and every and state.step % every == 0:
            write_vtk_snapshot(out / "snapshots" / f"step_{state.step:06d}.vtk", state.mesh, state.phi, state.u, rho)
        if echo and (state.step % 50 == 0):
            echo(f"step {rec.step:6d}  t={rec.t:9.4f}  E={rec.energy:.6f}  rafts={rec.rafts}  N={rec.vertices}")

    try:
        result = run(cfg.run, callback)
    finally:
        if logger:
            logger.close()
    if out is not None and cfg.output.vtk:
        s = result.final
        write_vtk_snapshot(out / "final.vtk", s.mesh, s.phi, s.u, rho)
    return result


def cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output.directory)
    t0 = time.perf_counter()
    res = simulate(cfg, out, echo=print)
    rec = res.records[-1]
    print(
        f"status={res.status} steps={rec.step} t={rec.t:.4f} energy={rec.energy:.6f} "
        f"rafts={rec.rafts} vertices={rec.vertices} wall={time.perf_counter() - t0:.1f}s"
    )
    if res.error:
        print(f"error: {res.error}", file=sys.stderr)
        return 1
    return 0


def _sweep_one(job):
    cfg, name, value, out = job
    cfg = apply_overrides(cfg, [f"{name}={value}"])
    res = simulate(cfg, out)
    rec = res.records[-1]
    return {
        "parameter": name,
        "value": value,
        "rafts": rec.rafts,
        "energy": repr(rec.energy),
        "t": repr(rec.t),
        "steps": rec.step,
        "status": res.status,
    }


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        print("error: no values given", file=sys.stderr)
        return 2
    root = Path(cfg.output.directory)
    jobs = [(copy.deepcopy(cfg), args.parameter, v, root / f"{args.parameter}_{v}") for v in values]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(args.jobs) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    root.mkdir(parents=True, exist_ok=True)
    with (root / "summary.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"{'value':>10}  {'rafts':>5}  {'energy':>12}  status")
    for r in rows:
        print(f"{r['value']:>10}  {r['rafts']:>5}  {float(r['energy']):12.4f}  {r['status']}")
    return 0 if all(r["status"] != "failed" for r in rows) else 1


def cmd_verify(args) -> int:
    from .verify import run_checks

    checks = run_checks(level=args.levels, seed=args.seed or 0)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print("all checks passed" if ok else "some checks FAILED")
    return 0 if ok else 1


def cmd_mesh_info(args) -> int:
    from .femcore import space
    from .geometry import build_octasphere

    mesh = build_octasphere(args.levels, args.radius)
    V = space(mesh)
    a = mesh.areas()
    e = mesh.edges()
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    exact = 4 * np.pi * args.radius**2
    print(f"level            {args.levels}")
    print(f"vertices         {mesh.n_vertices}")
    print(f"triangles        {mesh.n_triangles}")
    print(f"edges            {len(e)}")
    print(f"euler            {mesh.euler_characteristic()}")
    print(f"area             {V.area:.10f}")
    print(f"area rel. error  {(V.area - exact) / exact:.3e}")
    print(f"triangle area    min {a.min():.4e}  max {a.max():.4e}")
    print(f"edge length      min {lengths.min():.4e}  max {lengths.max():.4e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed of the initial condition")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="raftfem", description="Lipid-raft phase field on a perturbed sphere.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run one simulation")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", parents=[common], help="vary one parameter over a list")
    p.add_argument("parameter")
    p.add_argument("values", help="comma-separated values")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("verify", parents=[common], help="analytic self-checks")
    p.add_argument("--levels", type=int, default=4)
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("mesh-info", parents=[common], help="mesh statistics")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--radius", type=float, default=1.0)
    p.set_defaults(func=cmd_mesh_info)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (RaftFEMError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


cli = main

if __name__ == "__main__":
    sys.exit(main())
