"""``sigm-kit`` command line.

Exit codes: 0 success, 1 a checked bound was violated, 2 usage or config error.
Seed precedence: ``--seed`` flag, then the config file, then ``SIGM_KIT_SEED``,
then 0. Summaries go to stdout; CSV artifacts go to the output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .geometry import NormSpec
from .oracle import certify_oracle
from .problems import build
from .restart import complexity_calculators
from .schedule import Schedule, ScheduleParams, validate

SEED_ENV = "SIGM_KIT_SEED"


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, replicas: bool = True) -> None:
    p.add_argument("--config", required=True, help="experiment config JSON file")
    p.add_argument("--seed", type=int, help="base seed (overrides the config file)")
    if replicas:
        p.add_argument("--replicas", type=int, help="number of replicas M")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--output", help="output directory for CSV artifacts")
    p.add_argument("-v", "--verbose", action="store_true", help="print per-replica errors")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sigm-kit", description="Stochastic intermediate gradient experiments")
    sub = ap.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("solve", help="run one configuration and write its trace")
    _common(p, replicas=False)
    p.add_argument("--K", type=int, help="iteration budget")
    p.add_argument("--p", type=float, help="method parameter p in [1, 2]")

    p = sub.add_parser("bench", help="mean gap over replicas against the rate bound")
    _common(p)
    p.add_argument("--K", type=int, help="iteration budget")
    p.add_argument("--checkpoints", type=int, nargs="+", help="iterations to compare")

    p = sub.add_parser("deviations", help="exceedance frequencies of the deviation threshold")
    _common(p)
    p.add_argument("--k", type=int, required=True, help="iteration to test")
    p.add_argument("--omega", type=float, nargs="+", default=[1.0, 2.0, 3.0], help="Omega grid")

    p = sub.add_parser("restart-bench", help="restart suites: stage gaps, calls, confidence")
    _common(p)

    p = sub.add_parser("validate-schedule", help="check the coefficient inequalities")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--k-max", type=int, default=10000)

    p = sub.add_parser("certify-oracle", help="check the oracle inequality on random pairs")
    p.add_argument("--config", required=True, help="experiment config JSON file")
    p.add_argument("--pairs", type=int, default=10000, help="number of random (x, y) pairs to test")
    p.add_argument("--seed", type=int, help="seed for the sampled pairs")
    return ap


def load_config(args) -> harness.ExperimentConfig:
    path = Path(args.config)
    if not path.is_file():
        raise harness.ConfigError(f"config file not found: {path}")
    cfg = harness.read_config(path)
    raw = json.loads(path.read_text())
    seed = cfg.seed
    if "seed" not in raw and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise harness.ConfigError(f"{SEED_ENV} must be an integer") from None
    over = {}
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    over["seed"] = seed
    for name in ("replicas", "K", "p", "output", "checkpoints"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    try:
        return dataclasses.replace(cfg, **over)
    except ValueError as e:
        raise harness.ConfigError(str(e)) from e


def _report_errors(results, verbose: bool) -> int:
    bad = [r for r in results if not r.ok]
    if bad:
        print(f"{len(bad)} replica(s) failed")
        if verbose:
            for r in bad:
                print(f"  replica {r.replica}: {r.error}")
    return len(bad)


def cmd_solve(args) -> int:
    cfg = load_config(args)
    res = harness.run_one(cfg, 0)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trace_0000.csv"
    harness.write_trace(res.trace, path)
    last = res.trace[-1]
    gap = "n/a" if last.gap is None else f"{last.gap:.6g}"
    print(f"{cfg.method} k={last.k} phi={last.phi:.10g} gap={gap} calls={res.calls}")
    print(f"trace written to {path}")
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args)
    results = harness.run_replicas(cfg, args.jobs)
    failed = _report_errors(results, args.verbose)
    out = Path(cfg.output)
    harness.write_results(results, out)
    ks = cfg.checkpoints or [k for k in harness._checkpoints(cfg) if k >= 1]
    rows = harness.mean_gap_vs_bound(results, ks)
    harness.write_summary(rows, out / "summary.csv")
    for r in rows:
        flag = "FAIL" if r.violated else "ok"
        print(f"k={r.k:>7d} mean_gap={r.mean_gap:.4e} se={r.stderr:.2e} bound={r.bound:.4e} {flag}")
    return 1 if failed or any(r.violated for r in rows) else 0


def cmd_deviations(args) -> int:
    cfg = load_config(args)
    if cfg.method != "sigm":
        raise harness.ConfigError("deviations need method 'sigm'")
    cfg = dataclasses.replace(cfg, K=max(cfg.K, args.k), checkpoints=[args.k])
    built = build(cfg.problem)
    results = harness.run_replicas(cfg, args.jobs)
    failed = _report_errors(results, args.verbose)
    try:
        rows = harness.deviation_probability(results, args.k, args.omega, built.D,
                                             harness.schedule_for(cfg, built), built.oracle.meta.delta)
    except ValueError as e:
        raise harness.ConfigError(str(e)) from e
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_deviations(rows, out / "deviations.csv")
    for r in rows:
        print(f"k={r.k} omega={r.omega:g} threshold={r.threshold:.4e} freq={r.freq:.4f} "
              f"bound={r.bound:.4f} half_width={r.half_width:.4f} {'ok' if r.passed() else 'FAIL'}")
    return 1 if failed or not all(r.passed() for r in rows) else 0


def cmd_restart_bench(args) -> int:
    cfg = load_config(args)
    if cfg.method == "sigm":
        raise harness.ConfigError("restart-bench needs method 'sigma' or 'sigma2'")
    built = build(cfg.problem)
    params = harness.sigma_params(cfg, built)
    results = harness.run_replicas(cfg, args.jobs)
    failed = _report_errors(results, args.verbose)
    ok_results = [r for r in results if r.ok]
    harness.write_results(results, cfg.output)
    violated = False
    if not ok_results:
        return 1
    N = len(ok_results[0].stages)
    if cfg.method == "sigma":
        rows = harness.mean_gap_vs_bound(ok_results, range(1, N + 1))
        harness.write_summary(rows, Path(cfg.output) / "summary.csv")
        for r in rows:
            violated |= r.violated
            print(f"stage {r.k}: mean_gap={r.mean_gap:.4e} se={r.stderr:.2e} bound={r.bound:.4e} "
                  f"{'FAIL' if r.violated else 'ok'}")
    else:
        gaps = np.array([r.trace[-1].gap for r in ok_results])
        thr = ok_results[0].trace[-1].bound
        freq = float(np.mean(gaps > thr))
        hw = harness.binomial_half_width(params.Lambda, gaps.size)
        violated = freq > params.Lambda + 3 * hw
        print(f"after {N} stages: threshold={thr:.4e} freq={freq:.4f} Lambda={params.Lambda:g} "
              f"half_width={hw:.4f} {'FAIL' if violated else 'ok'}")
    if params.eps is not None:
        c = complexity_calculators(params)
        cap = c.total_calls_bound_v1 if cfg.method == "sigma" else c.total_calls_bound_v2
        worst = max(r.calls for r in ok_results)
        over = worst > cap
        violated |= over
        print(f"oracle calls: max {worst} vs bound {cap:.6g} {'FAIL' if over else 'ok'}")
    return 1 if failed or violated else 0


def cmd_validate_schedule(args) -> int:
    try:
        sched = Schedule(ScheduleParams(args.p, args.L, args.sigma, args.R, args.a, args.b))
    except ValueError as e:
        raise UsageError(str(e)) from e
    rep = validate(sched, args.k_max)
    if rep.passed:
        print(f"schedule admissible for k <= {args.k_max}")
        return 0
    for name, k in sorted(rep.first_violation.items(), key=lambda kv: kv[1]):
        print(f"violated {name} first at k={k}")
    return 1


def _pair_sampler(built, n):
    fs = built.feasible
    if fs.kind == "standard-simplex":
        return lambda r: r.dirichlet(np.ones(n))
    if fs.kind == "euclidean-ball":
        c, rad = fs.center, fs.radius
    else:
        c, rad = np.zeros(n), max(1.0, 2.0 * built.R)

    def sample(r):
        v = r.standard_normal(n)
        return c + rad * v / np.linalg.norm(v) * r.random() ** (1.0 / n)

    return sample


def cmd_certify_oracle(args) -> int:
    cfg = load_config(args)
    built = build(cfg.problem)
    n = built.oracle.n
    spec = built.setup.norm if built.setup.norm.kind == "l1" else NormSpec.euclidean(n)
    rep = certify_oracle(built.oracle, built.oracle.value, args.pairs, np.random.default_rng(cfg.seed),
                         spec=spec, sampler=_pair_sampler(built, n))
    print(f"pairs={rep.pairs} lower_violations={rep.lower_violations} (max {rep.max_lower_violation:.3e}) "
          f"upper_violations={rep.upper_violations} (max {rep.max_upper_violation:.3e})")
    return 0 if rep.passed else 1


COMMANDS = {
    "solve": cmd_solve,
    "bench": cmd_bench,
    "deviations": cmd_deviations,
    "restart-bench": cmd_restart_bench,
    "validate-schedule": cmd_validate_schedule,
    "certify-oracle": cmd_certify_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (harness.ConfigError, UsageError) as e:
        print(f"sigm-kit: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
