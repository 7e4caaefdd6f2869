"""Seeded replica runs, empirical bound checks and CSV/JSON persistence.

Config files are JSON with exactly the fields of :class:`ExperimentConfig`
(nested ``problem`` and ``restart`` objects); unknown fields are rejected.
``write_config`` emits a canonical form, so read/write round-trips bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .problems import BuiltProblem, ProblemSpec, build
from .restart import RestartProblem, SigmaParams, sigma2_run, sigma2_threshold, sigma_gap_bound, sigma_run
from .rng import RngStream
from .schedule import Schedule, ScheduleParams, deviation_threshold
from .sigm import IterationRecord, SigmProblem, geometric_checkpoints, run_state

TRACE_HEADER = ("k", "phi", "gap", "bound", "calls", "wall_ns")
DEVIATION_HEADER = ("k", "omega", "threshold", "freq", "bound", "half_width")
SUMMARY_HEADER = ("k", "mean_gap", "stderr", "bound", "violated", "replicas")
METHODS = ("sigm", "sigma", "sigma2")


class ConfigError(ValueError):
    pass


class TraceParseError(ValueError):
    def __init__(self, path, row: int, column: str, value: str):
        super().__init__(f"{path}: row {row}, column {column!r}: cannot parse {value!r}")
        self.row, self.column = row, column


@dataclass
class RestartSpec:
    N: Optional[int] = None
    eps: Optional[float] = None
    Lambda: Optional[float] = None


@dataclass
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    method: str = "sigm"
    p: float = 2.0
    K: int = 1000
    minibatch: int = 1
    restart: RestartSpec = field(default_factory=RestartSpec)
    replicas: int = 1
    seed: int = 0
    checkpoints: Optional[list] = None
    timing: bool = False
    output: str = "runs"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.replicas < 1 or self.K < 0 or self.minibatch < 1:
            raise ConfigError("need replicas >= 1, K >= 0 and minibatch >= 1")


def _strict(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    return data


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(_strict(ExperimentConfig, data, "config"))
    try:
        if "problem" in data:
            data["problem"] = ProblemSpec(**_strict(ProblemSpec, data["problem"], "problem"))
        if "restart" in data:
            data["restart"] = RestartSpec(**_strict(RestartSpec, data["restart"], "restart"))
        return ExperimentConfig(**data)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def config_to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), indent=2) + "\n"


def read_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    return config_from_dict(data)


def write_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(config_to_json(cfg))


@dataclass
class ReplicaResult:
    replica: int
    seed: int
    trace: list = field(default_factory=list)
    calls: int = 0
    stages: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def schedule_for(cfg: ExperimentConfig, built: BuiltProblem) -> Schedule:
    meta = built.oracle.meta
    return Schedule(ScheduleParams(cfg.p, meta.L, meta.sigma / math.sqrt(cfg.minibatch), built.R))


def sigma_params(cfg: ExperimentConfig, built: BuiltProblem) -> SigmaParams:
    meta = built.oracle.meta
    if not meta.mu > 0:
        raise ConfigError("restart methods need a strongly convex problem (mu > 0)")
    r = cfg.restart
    if r.N is None and r.eps is None:
        raise ConfigError("restart methods need restart.N or restart.eps")
    return SigmaParams(L=meta.L, mu=meta.mu, R0=built.R, p=cfg.p, sigma=meta.sigma,
                       V2=built.setup.growth, delta=meta.delta, eps=r.eps, Lambda=r.Lambda, N=r.N)


def _checkpoints(cfg: ExperimentConfig):
    if cfg.checkpoints is None:
        return geometric_checkpoints(cfg.K)
    return sorted({int(k) for k in cfg.checkpoints if 0 <= int(k) <= cfg.K})


def run_one(cfg: ExperimentConfig, replica: int, built: Optional[BuiltProblem] = None) -> ReplicaResult:
    """Single replica; the rng stream is keyed by ``(cfg.seed, replica)``."""
    built = built or build(cfg.problem)
    stream = RngStream(cfg.seed, replica)
    res = ReplicaResult(replica, cfg.seed)
    if cfg.method == "sigm":
        prob = SigmProblem(built.oracle, built.h, built.setup, schedule_for(cfg, built), cfg.minibatch)
        _, trace, state = run_state(prob, cfg.K, built.evaluator, stream, _checkpoints(cfg),
                                    timing=cfg.timing)
        res.trace, res.calls = trace, state.calls
        return res
    params = sigma_params(cfg, built)
    rp = RestartProblem(built.oracle, built.setup.center, built.h, built.feasible,
                        evaluator=built.evaluator)
    runner = sigma_run if cfg.method == "sigma" else sigma2_run
    _, stages = runner(params, rp, stream)
    u0 = built.setup.center
    calls = 0
    N = len(stages)
    trace = [IterationRecord(0, built.evaluator.phi(u0), built.evaluator.gap(u0), float("inf"), 0)]
    for st in stages:
        calls += st.oracle_calls
        k = st.k + 1
        bound = sigma_gap_bound(params, k) if cfg.method == "sigma" else (
            sigma2_threshold(params, N) if k == N else float("inf"))
        trace.append(IterationRecord(k, built.evaluator.phi(st.u_next), st.gap, bound, calls))
    res.trace, res.calls, res.stages = trace, calls, stages
    return res


def _safe_one(args):
    cfg_dict, replica = args
    cfg = config_from_dict(cfg_dict)
    try:
        return run_one(cfg, replica)
    except Exception as e:  # collected per replica, the batch goes on
        return ReplicaResult(replica, cfg.seed, error=f"{type(e).__name__}: {e}")


def run_replicas(cfg: ExperimentConfig, jobs: int = 1, replicas: Optional[Sequence[int]] = None):
    """Run replicas ``0..M-1`` (or the given indices); results do not depend on ``jobs``."""
    idx = list(range(cfg.replicas)) if replicas is None else list(replicas)
    if jobs <= 1:
        built = build(cfg.problem)
        out = []
        for r in idx:
            try:
                out.append(run_one(cfg, r, built))
            except Exception as e:
                out.append(ReplicaResult(r, cfg.seed, error=f"{type(e).__name__}: {e}"))
        return out
    payload = dataclasses.asdict(cfg)
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_safe_one, [(payload, r) for r in idx]))


@dataclass
class MeanGapRow:
    k: int
    mean_gap: float
    stderr: float
    bound: float
    replicas: int

    @property
    def violated(self) -> bool:
        return self.mean_gap > self.bound


def _gap_table(results, checkpoints):
    ok = [r for r in results if r.ok]
    cols = {}
    for k in checkpoints:
        gaps, bound = [], None
        for r in ok:
            rec = next((t for t in r.trace if t.k == k), None)
            if rec is None or rec.gap is None:
                raise ValueError(f"replica {r.replica} has no gap recorded at k={k}")
            gaps.append(rec.gap)
            bound = rec.bound
        cols[k] = (np.array(gaps), bound)
    return cols


def mean_gap_vs_bound(results, checkpoints) -> list[MeanGapRow]:
    """Empirical mean gap and its standard error next to the recorded bound."""
    rows = []
    for k, (g, bound) in _gap_table(results, list(checkpoints)).items():
        se = float(g.std(ddof=1) / math.sqrt(g.size)) if g.size > 1 else 0.0
        rows.append(MeanGapRow(k, float(g.mean()), se, bound, int(g.size)))
    return rows


@dataclass
class DeviationRow:
    k: int
    omega: float
    threshold: float
    freq: float
    bound: float
    half_width: float

    def passed(self, slack: float = 3.0) -> bool:
        return self.freq <= self.bound + slack * self.half_width


def binomial_half_width(q: float, M: int) -> float:
    """Normal-approximation standard deviation of a frequency with success rate ``q``."""
    q = min(max(q, 0.0), 1.0)
    return math.sqrt(q * (1 - q) / M)


def deviation_probability(results, k: int, omegas, D: Optional[float], schedule: Schedule,
                          delta: float) -> list[DeviationRow]:
    """Frequency of ``gap(y_k)`` above the deviation threshold for each ``omega``."""
    if D is None or not math.isfinite(D):
        raise ValueError("deviation bounds need a bounded feasible set with known diameter D")
    g = _gap_table(results, [k])[k][0]
    rows = []
    for om in omegas:
        thr = deviation_threshold(schedule, delta, D, om, k)
        bound = 3 * math.exp(-om)
        freq = float(np.mean(g > thr))
        rows.append(DeviationRow(k, float(om), thr, freq, bound, binomial_half_width(bound, g.size)))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t in trace:
            w.writerow([t.k, _fmt(t.phi), _fmt(t.gap), _fmt(t.bound), t.calls, t.wall_ns])


def read_trace(path) -> list[IterationRecord]:
    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if tuple(header or ()) != TRACE_HEADER:
            raise TraceParseError(path, 1, "header", ",".join(header or ()))
        for i, row in enumerate(rows, start=2):
            if len(row) != len(TRACE_HEADER):
                raise TraceParseError(path, i, "row", ",".join(row))
            vals = {}
            for name, raw in zip(TRACE_HEADER, row):
                try:
                    if name in ("k", "calls", "wall_ns"):
                        vals[name] = int(raw)
                    elif name == "gap" and raw == "":
                        vals[name] = None
                    else:
                        vals[name] = float(raw)
                except ValueError:
                    raise TraceParseError(path, i, name, raw) from None
            out.append(IterationRecord(**vals))
    return out


def write_rows(rows, header, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(getattr(r, h)) for h in header])


def write_summary(rows: list[MeanGapRow], path) -> None:
    write_rows(rows, SUMMARY_HEADER, path)


def write_deviations(rows: list[DeviationRow], path) -> None:
    write_rows(rows, DEVIATION_HEADER, path)


def write_results(results, outdir) -> list[Path]:
    """One trace CSV per replica, named ``trace_<replica>.csv``.

    Replicas that failed get an ``error_<replica>.txt`` instead.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in results:
        if r.ok:
            p = outdir / f"trace_{r.replica:04d}.csv"
            write_trace(r.trace, p)
        else:
            p = outdir / f"error_{r.replica:04d}.txt"
            p.write_text(r.error + "\n")
        paths.append(p)
    return paths


def default_jobs() -> int:
    return max(1, os.cpu_count() or 1)
