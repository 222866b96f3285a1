import json
import math
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare, kstest

import dsrmilp.harness as harness
from dsrmilp.feeder import Bus, Edge, Feeder, derive_post_outage
from dsrmilp.harness import (
    AGGREGATE_COLUMNS, RECORD_COLUMNS, BatchAborted, BatchSpec, dump_replay, eligible_edges,
    floor_load_pct, restored_load_pct, run_batch, sample_scenario, scenario_rng,
)
from dsrmilp.validator import RestorationPlan, ValidationReport, Violation
from oracles import toy_feeder


def test_eligible_edges(ieee37):
    lines = eligible_edges(ieee37)
    assert all(ieee37.edges[k].kind == "in_service" for k in lines)
    assert len(lines) == 32
    wide = eligible_edges(ieee37, widen=True)
    assert set(lines) < set(wide)
    assert set(wide) - set(lines) == set(ieee37.switches) | set(ieee37.regulators)


def test_same_key_same_scenario(ieee37):
    a = sample_scenario(ieee37, 3, scenario_rng(7, 3, 12))
    b = sample_scenario(ieee37, 3, scenario_rng(7, 3, 12))
    assert a == b
    others = {tuple(sorted(sample_scenario(ieee37, 3, scenario_rng(s, 3, 12)).failed_edges))
              for s in range(8)}
    assert len(others) > 1


def test_zero_failures(ieee37):
    s = sample_scenario(ieee37, 0, scenario_rng(1, 0, 0))
    assert not s.failed_edges and all(s.x0)
    rec = run_batch(BatchSpec(ieee37, k_values=(0,), n_per_k=1)).records[0]
    assert rec.status == "optimal" and rec.valid
    assert rec.restored_pct == pytest.approx(100.0)
    assert rec.switch_changes == 0


def test_draws_are_uniform(ieee37):
    pool = eligible_edges(ieee37)
    counts = Counter()
    solar = []
    host = ieee37.non_black_start[0]
    n = 50_000
    for i in range(n):
        s = sample_scenario(ieee37, 2, scenario_rng(99, 2, i))
        assert len(s.failed_edges) == 2
        counts.update(s.failed_edges)
        solar.append(s.solar_avail[host] / ieee37.buses[host].p_max)
    observed = np.array([counts[k] for k in pool])
    assert observed.sum() == 2 * n  # 10^5 line selections
    assert chisquare(observed).pvalue > 1e-3
    # each line's count is binomial(n, 2/|pool|) and sits within 3 sigma
    p = 2 / len(pool)
    assert np.all(np.abs(observed - n * p) <= 3 * np.sqrt(n * p * (1 - p)))
    assert kstest(solar, "uniform").pvalue > 1e-3


def test_restored_pct_arithmetic():
    f = toy_feeder()
    s = derive_post_outage(f, {0})
    served = RestorationPlan(x=[1, 1, 1], y=[0, 1], v=[1.0] * 3, p=[100.0, -100.0, 0.0],
                             q=[0.0] * 3, P=[0.0, 0.0], Q=[0.0, 0.0])
    assert restored_load_pct(f, s, served) == 100.0
    served.x[1] = 0
    assert restored_load_pct(f, s, served) == 0.0
    assert floor_load_pct(f, s) == 0.0
    assert floor_load_pct(f, derive_post_outage(f)) == 100.0


def test_restored_pct_with_elastic_load_at_minimum():
    buses = (Bus(0, "root", -500, 500, -500, 500, 1.0, 1.0),
             Bus(1, "load_fixed", -100, -100, -40, -40),
             Bus(2, "load_elastic", -60, -30, -20, -10))
    edges = (Edge(0, 0, 1, "in_service"), Edge(1, 1, 2, "in_service"))
    f = Feeder(buses, edges)
    plan = RestorationPlan(x=[1, 1, 1], y=[1, 1], v=[1.0] * 3, p=[130.0, -100.0, -30.0],
                           q=[50.0, -40.0, -10.0], P=[130.0, 30.0], Q=[50.0, 10.0])
    # (100 + 30) / (100 + 60)
    assert restored_load_pct(f, derive_post_outage(f), plan) == pytest.approx(81.25)


def test_record_does_not_depend_on_batch_shape(ieee37):
    alone = run_batch(BatchSpec(ieee37, k_values=(2,), n_per_k=2)).records
    mixed = [r for r in run_batch(BatchSpec(ieee37, k_values=(1, 2), n_per_k=2)).records if r.k == 2]
    assert [(r.failed_edges, r.objective, r.nodes) for r in alone] == \
        [(r.failed_edges, r.objective, r.nodes) for r in mixed]


def test_small_batch_tables(ieee37):
    res = run_batch(BatchSpec(ieee37, k_values=(1, 3), n_per_k=3))
    assert [(r.k, r.index) for r in res.records] == [(1, 0), (1, 1), (1, 2), (3, 0), (3, 1), (3, 2)]
    assert all(r.valid and r.status == "optimal" for r in res.records)
    lines = res.records_csv().splitlines()
    assert lines[0] == ",".join(RECORD_COLUMNS) and len(lines) == 7
    masked = res.records_csv(mask_timing=True).splitlines()
    assert all(row.split(",")[6] == "NA" for row in masked[1:])
    agg = res.aggregates_csv().splitlines()
    assert agg[0] == ",".join(AGGREGATE_COLUMNS) and len(agg) == 3
    for a in res.aggregates:
        assert a["n"] == 3 and 0 <= a["mean_restored_pct"] <= 100
        assert a["median_ms"] <= a["max_ms"]


def test_masked_tables_repeat_across_runs_and_workers(ieee37):
    spec = BatchSpec(ieee37, k_values=(1, 2, 4), n_per_k=3)
    a = run_batch(spec)
    b = run_batch(spec)
    c = run_batch(BatchSpec(ieee37, k_values=(1, 2, 4), n_per_k=3, workers=2))
    for other in (b, c):
        assert a.records_csv(True) == other.records_csv(True)
        assert a.aggregates_csv(True) == other.aggregates_csv(True)


def test_spec_errors(ieee37):
    with pytest.raises(ValueError, match="n_per_k"):
        BatchSpec(ieee37, n_per_k=0)
    with pytest.raises(ValueError, match="outage-eligible"):
        BatchSpec(ieee37, k_values=(33,))
    BatchSpec(ieee37, k_values=(33,), widen_eligibility=True)


def test_limit_status_is_recorded(ieee37):
    rec = run_batch(BatchSpec(ieee37, k_values=(3,), n_per_k=1, time_limit=0.0)).records[0]
    assert rec.status == "time_limit" and not rec.valid
    assert math.isnan(rec.restored_pct)


def test_validation_failure_aborts_with_replay(ieee37, monkeypatch):
    bad = ValidationReport([Violation("balance", "bus 701", 1.0)])
    monkeypatch.setattr(harness, "validate", lambda *a, **k: bad)
    with pytest.raises(BatchAborted, match="failed validation") as info:
        run_batch(BatchSpec(ieee37, k_values=(2,), n_per_k=1, seed=5))
    replay = json.loads(dump_replay(info.value))
    assert replay["k"] == 2 and replay["seed"] == 5 and replay["violations"]
    expected = sample_scenario(ieee37, 2, scenario_rng(5, 2, 0))
    assert sorted(replay["failed_edges"]) == sorted(expected.failed_edges)


def test_solar_draws_respect_rating(ieee37):
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = sample_scenario(ieee37, int(rng.integers(0, 6)), rng)
        for i, avail in s.solar_avail.items():
            assert 0.0 <= avail <= ieee37.buses[i].p_max
