"""Mean optimality gap of the base method against its bound, for several p."""

import argparse
from pathlib import Path

from sigm_kit.harness import ExperimentConfig, mean_gap_vs_bound, run_replicas, write_summary
from sigm_kit.problems import ProblemSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--K", type=int, default=1000)
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--p", type=float, nargs="+", default=[1.0, 1.5, 2.0])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/mean_rate")
    args = ap.parse_args()

    ks = sorted({k for k in (1, 3, 10, 30, 100, 300, 1000, 3000, 10000) if k <= args.K} | {args.K})
    for p in args.p:
        cfg = ExperimentConfig(ProblemSpec("quadratic", n=args.n, sigma=args.sigma), p=p, K=args.K,
                               replicas=args.replicas, checkpoints=ks, seed=0)
        rows = mean_gap_vs_bound(run_replicas(cfg, jobs=args.jobs), ks)
        path = Path(args.out) / f"p{p:g}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_summary(rows, path)
        for r in rows:
            print(f"p={p:g} k={r.k:6d} mean gap {r.mean_gap:.3e} ± {r.stderr:.1e}  bound {r.bound:.3e}")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
