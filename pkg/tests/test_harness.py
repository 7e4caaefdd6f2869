import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigm_kit import harness
from sigm_kit.harness import (ConfigError, ExperimentConfig, RestartSpec, TraceParseError,
                              binomial_half_width, config_from_dict, config_to_json,
                              deviation_probability, mean_gap_vs_bound, read_config, read_trace,
                              run_one, run_replicas, schedule_for, write_config, write_results,
                              write_trace)
from sigm_kit.problems import ProblemSpec, build
from sigm_kit.rng import RngStream
from sigm_kit.schedule import deviation_threshold, mean_gap_bound
from sigm_kit.sigm import SigmProblem, run

ROOT = Path(__file__).resolve().parents[1]


def small(**kw):
    base = dict(problem=ProblemSpec("quadratic", n=5, sigma=0.5), K=30, replicas=3, seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_shipped_config_round_trips_bytes(self, tmp_path):
        src = ROOT / "configs" / "quadratic_p2.json"
        cfg = read_config(src)
        out = tmp_path / "c.json"
        write_config(cfg, out)
        assert out.read_bytes() == src.read_bytes()

    @given(n=st.integers(1, 50), sigma=st.floats(0.0, 10.0), p=st.floats(1.0, 2.0),
           K=st.integers(0, 10 ** 6), seed=st.integers(0, 2 ** 31),
           ck=st.none() | st.lists(st.integers(0, 100), max_size=5),
           eps=st.none() | st.floats(1e-6, 1.0))
    def test_round_trip_structural(self, n, sigma, p, K, seed, ck, eps):
        cfg = ExperimentConfig(ProblemSpec("quadratic", n=n, sigma=sigma), p=p, K=K, seed=seed,
                               checkpoints=ck, restart=RestartSpec(eps=eps))
        text = config_to_json(cfg)
        back = config_from_dict(json.loads(text))
        assert back == cfg
        assert config_to_json(back) == text

    def test_unknown_fields_rejected(self):
        with pytest.raises(ConfigError, match="unknown field.*colour"):
            config_from_dict({"colour": 1})
        with pytest.raises(ConfigError, match="problem: unknown field"):
            config_from_dict({"problem": {"kind": "quadratic", "size": 3}})

    def test_invalid_values(self):
        with pytest.raises(ConfigError, match="method"):
            config_from_dict({"method": "adam"})
        with pytest.raises(ConfigError):
            config_from_dict({"replicas": 0})
        with pytest.raises(ConfigError, match="unknown problem kind"):
            config_from_dict({"problem": {"kind": "cube"}})

    def test_malformed_json_names_position(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"K": 3,\n "seed": }')
        with pytest.raises(ConfigError, match="line 2"):
            read_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="missing.json"):
            read_config(tmp_path / "missing.json")


class TestTraces:
    def test_header(self, tmp_path):
        res = run_one(small(), 0)
        write_trace(res.trace, tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == "k,phi,gap,bound,calls,wall_ns"

    def test_round_trip(self, tmp_path):
        res = run_one(small(), 0)
        write_trace(res.trace, tmp_path / "t.csv")
        assert read_trace(tmp_path / "t.csv") == res.trace

    def test_parse_error_names_row_and_column(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("k,phi,gap,bound,calls,wall_ns\n0,1.0,0.5,inf,1,0\n1,1.0,oops,2.0,2,0\n")
        with pytest.raises(TraceParseError, match="row 3, column 'gap'") as e:
            read_trace(p)
        assert e.value.row == 3 and e.value.column == "gap"

    def test_bad_header(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("k,phi\n")
        with pytest.raises(TraceParseError, match="header"):
            read_trace(p)

    def test_bounds_are_the_schedule_values(self):
        cfg = small(K=200)
        built = build(cfg.problem)
        sched = schedule_for(cfg, built)
        for rec in run_one(cfg, 0).trace:
            if rec.k >= 1:
                assert rec.bound == mean_gap_bound(sched, 0.0, rec.k)

    def test_results_written_per_replica(self, tmp_path):
        results = run_replicas(small())
        results.append(harness.ReplicaResult(7, 11, error="ValueError: boom"))
        paths = write_results(results, tmp_path)
        assert [p.name for p in paths] == ["trace_0000.csv", "trace_0001.csv", "trace_0002.csv", "error_0007.txt"]
        assert (tmp_path / "error_0007.txt").read_text() == "ValueError: boom\n"


class TestReplicas:
    def test_single_replica_is_one_engine_run(self):
        cfg = small(replicas=1, checkpoints=list(range(31)))
        built = build(cfg.problem)
        prob = SigmProblem(built.oracle, built.h, built.setup, schedule_for(cfg, built))
        _, trace = run(prob, cfg.K, built.evaluator, RngStream(cfg.seed, 0))
        assert run_replicas(cfg)[0].trace == trace

    def test_identical_configs_identical_traces(self):
        a = [r.trace for r in run_replicas(small())]
        b = [r.trace for r in run_replicas(small())]
        assert a == b

    def test_permuted_indices(self):
        fwd = {r.replica: r.trace for r in run_replicas(small(), replicas=[0, 1, 2])}
        rev = {r.replica: r.trace for r in run_replicas(small(), replicas=[2, 0, 1])}
        assert fwd == rev
        assert fwd[0] != fwd[1]

    def test_parallel_matches_serial(self):
        serial = [r.trace for r in run_replicas(small())]
        parallel = [r.trace for r in run_replicas(small(), jobs=2)]
        assert serial == parallel

    def test_errors_are_collected(self):
        cfg = small(method="sigma")  # no stage budget
        results = run_replicas(cfg)
        assert len(results) == 3 and not any(r.ok for r in results)
        assert "restart.N or restart.eps" in results[0].error

    def test_restart_trace(self):
        cfg = small(problem=ProblemSpec("quadratic", n=5, mu=0.1), method="sigma", restart=RestartSpec(N=3),
                    replicas=1)
        res = run_one(cfg, 0)
        assert [t.k for t in res.trace] == [0, 1, 2, 3]
        assert res.calls == sum(s.oracle_calls for s in res.stages)
        assert all(t.gap <= t.bound for t in res.trace[1:])


class TestMeanGap:
    def test_noiseless_single_trace_within_bound(self):
        cfg = small(problem=ProblemSpec("quadratic", n=5), replicas=1, K=300)
        rows = mean_gap_vs_bound(run_replicas(cfg), [1, 10, 100, 300])
        assert [r.k for r in rows] == [1, 10, 100, 300]
        assert not any(r.violated for r in rows)
        assert rows[0].stderr == 0.0

    def test_empty_checkpoints(self):
        assert mean_gap_vs_bound(run_replicas(small()), []) == []

    def test_missing_checkpoint(self):
        with pytest.raises(ValueError, match="no gap"):
            mean_gap_vs_bound(run_replicas(small()), [17])

    def test_stderr(self):
        results = run_replicas(small(checkpoints=[30]))
        gaps = np.array([r.trace[-1].gap for r in results])
        row = mean_gap_vs_bound(results, [30])[0]
        assert row.mean_gap == pytest.approx(gaps.mean())
        assert row.stderr == pytest.approx(gaps.std(ddof=1) / math.sqrt(3))


@pytest.fixture(scope="module")
def ball_results():
    cfg = ExperimentConfig(ProblemSpec("quadratic", n=5, sigma=1.0, radius=1.0, dist=0.5), K=20,
                           replicas=40, checkpoints=[20], seed=3)
    built = build(cfg.problem)
    return cfg, built, run_replicas(cfg)


class TestDeviations:
    def test_thresholds_verbatim(self, ball_results):
        cfg, built, results = ball_results
        sched = schedule_for(cfg, built)
        rows = deviation_probability(results, 20, [0.0, 1.0, 5.0], built.D, sched, 0.0)
        for r in rows:
            assert r.threshold == deviation_threshold(sched, 0.0, built.D, r.omega, 20)
            assert r.bound == 3 * math.exp(-r.omega)
            assert 0.0 <= r.freq <= 1.0

    def test_zero_and_huge_omega(self, ball_results):
        cfg, built, results = ball_results
        sched = schedule_for(cfg, built)
        zero, huge = deviation_probability(results, 20, [0.0, 1e6], built.D, sched, 0.0)
        assert zero.passed() and zero.half_width == 0.0
        assert huge.freq == 0.0 and huge.passed()

    @given(omegas=st.lists(st.floats(0.0, 1e-2), min_size=2, max_size=6))
    @settings(max_examples=20)
    def test_frequencies_monotone(self, ball_results, omegas):
        cfg, built, results = ball_results
        # the gaps sit far below the threshold at moderate omega; rescale delta to put the threshold among them
        gaps = np.array([r.trace[-1].gap for r in results])
        sched = schedule_for(cfg, built)
        base = deviation_threshold(sched, 0.0, built.D, 0.0, 20)
        delta = (np.median(gaps) - base) / 48.0 if np.median(gaps) > base else 0.0
        rows = deviation_probability(results, 20, sorted(omegas), built.D, sched, delta)
        freqs = [r.freq for r in rows]
        assert all(a >= b for a, b in zip(freqs, freqs[1:]))

    def test_unbounded_set_rejected(self):
        cfg = small()
        built = build(cfg.problem)
        with pytest.raises(ValueError, match="diameter"):
            deviation_probability(run_replicas(cfg), 30, [1.0], built.D, schedule_for(cfg, built), 0.0)

    def test_half_width(self):
        assert binomial_half_width(0.25, 100) == pytest.approx(math.sqrt(0.25 * 0.75 / 100))
        assert binomial_half_width(3.0, 100) == 0.0
