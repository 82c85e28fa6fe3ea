"""How the final raft count depends on Lambda, b, sigma and kappa.

Each parameter is varied in turn around the base case (Lambda = 5, b = 1,
sigma = 1, kappa = 1, alpha = -0.5) starting from the same seeded random
data. Runs go on until the phase field is nearly still.

    python demos/parameter_trends.py --out trends.jsonl

Results are appended to the output file one JSON line per run, so an
interrupted study resumes where it stopped.
"""

import argparse
import json
import time
from pathlib import Path

from raftfem.dynamics import AdaptSettings, RunSettings, TimeControl, run
from raftfem.physics import Params

SWEEPS = {
    "Lambda": ((0.0, 0.5, 5.0), "more rafts with larger |Lambda|", +1),
    "b": ((0.2, 1.0, 2.5), "fewer rafts with larger line tension b", -1),
    "sigma": ((0.0, 1.0, 10.0), "more rafts with larger tension sigma", +1),
    "kappa": ((0.1, 1.0, 10.0), "more rafts with larger rigidity kappa", +1),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="trends.jsonl")
    ap.add_argument("--eps", type=float, default=0.04)
    ap.add_argument("--level", type=int, default=4)
    ap.add_argument("--extra-levels", type=int, default=2)
    ap.add_argument("--t-end", type=float, default=1000.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--progress", type=int, default=50, help="print a progress line every n steps")
    args = ap.parse_args()

    out = Path(args.out)
    done = {}
    if out.exists():
        for line in out.read_text().splitlines():
            row = json.loads(line)
            done[tuple(sorted(row["params"].items()))] = row

    base = {"Lambda": 5.0, "b": 1.0, "sigma": 1.0, "kappa": 1.0}
    for name, (values, claim, direction) in SWEEPS.items():
        counts = []
        for v in values:
            params = dict(base, **{name: v})
            key = tuple(sorted(params.items()))
            if key not in done:
                rs = RunSettings(
                    params=Params(eps=args.eps, **params),
                    level=args.level,
                    seed=args.seed,
                    t_end=args.t_end,
                    time=TimeControl(),
                    adapt=AdaptSettings(enabled=True, extra_levels=args.extra_levels),
                )
                t0 = time.perf_counter()

                def progress(state, rec):
                    if rec.step % args.progress == 0 and rec.step:
                        print(
                            f"    step {rec.step} t={rec.t:.2f} rafts={rec.rafts} v_max={rec.v_max:.1e} "
                            f"N={rec.vertices} gmres={rec.gmres_iterations} wall={time.perf_counter() - t0:.0f}s",
                            flush=True,
                        )

                res = run(rs, progress)
                rec = res.records[-1]
                done[key] = row = {
                    "params": params,
                    "rafts": rec.rafts,
                    "energy": rec.energy,
                    "t": rec.t,
                    "steps": rec.step,
                    "vertices": rec.vertices,
                    "status": res.status,
                    "wall": time.perf_counter() - t0,
                }
                with out.open("a") as fh:
                    fh.write(json.dumps(row) + "\n")
                print(f"  {name}={v}: {row['rafts']} rafts, E={row['energy']:.4f}, t={row['t']:.1f}, {row['status']}", flush=True)
            counts.append(done[key]["rafts"])
        ok = all((b - a) * direction >= 0 for a, b in zip(counts, counts[1:]))
        print(f"{name:>6} {values}: rafts {counts}  ({claim}: {'yes' if ok else 'no'})", flush=True)


if __name__ == "__main__":
    main()
