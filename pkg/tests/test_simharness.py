import csv
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from drselect.exceptions import EmptyCell
from drselect.simharness import (ReplicateRecord, SimConfig, StrategyRecord, aggregate, coverage_metrics, export,
                                 replicate_seeds, run_grid, run_replicate, selection_metrics)

SMALL = SimConfig(n=400, p=10, grid_size=20, folds=5)


def fake_record(rep, tau, covered=True, strategy="UNI", ok=True):
    half = 0.5 if covered else 0.01
    s = StrategyRecord(strategy, (3, 4), tau, 0.1, tau - half, tau + half) if ok else \
        StrategyRecord(strategy, (3, 4), error="NotConverged: x")
    return ReplicateRecord(2, "a", rep, rep, 100, 0.0, (3, 4), (3, 4), None, (s,))


class TestSelectionMetrics:
    def test_perfect(self):
        m = selection_metrics([(3, 4)] * 5, (3, 4))
        assert (m.over, m.under, m.fn, m.fp) == (0, 0, 0, 0)

    def test_missing_one(self):
        m = selection_metrics([(4,)] * 5, (3, 4))
        assert (m.under, m.fn, m.over, m.fp) == (1, 1, 0, 0)

    def test_mixed(self):
        m = selection_metrics([(3, 4, 9), (3,), (3, 4)], (3, 4))
        assert m.over == pytest.approx(1 / 3) and m.under == pytest.approx(1 / 3)
        assert m.fp == pytest.approx(1 / 3) and m.fn == pytest.approx(1 / 3) and m.replicates == 3

    @given(st.lists(st.frozensets(st.integers(1, 49), max_size=12), min_size=1, max_size=20),
           st.frozensets(st.integers(1, 49), min_size=1, max_size=6))
    def test_bounds(self, selected, truth):
        m = selection_metrics(selected, truth)
        assert 0 <= m.over <= 1 and 0 <= m.under <= 1
        assert 0 <= m.fn <= len(truth) and 0 <= m.fp <= 49 - len(truth)


class TestCoverageMetrics:
    def test_single_exact(self):
        m = coverage_metrics([(1.0, 0.1, 0.8, 1.2)], 1.0)
        assert (m.bias, m.sd, m.coverage, m.rmse) == (0.0, 0.0, 1.0, 0.0)

    def test_two_replicates(self):
        m = coverage_metrics([(0.0, 1, -1, 1), (2.0, 1, 1, 3)], 1.0)
        assert m.bias == 0.0 and m.sd == pytest.approx(math.sqrt(2)) and m.rmse == pytest.approx(math.sqrt(2))
        assert m.coverage == 1.0

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.floats(-2, 2))
    def test_rmse_identity(self, taus, truth):
        m = coverage_metrics([(t, 0.1, t - 0.2, t + 0.2) for t in taus], truth)
        assert abs(m.bias ** 2 + m.sd ** 2 - m.rmse ** 2) <= 1e-10 * max(1.0, m.rmse ** 2)
        assert 0 <= m.coverage <= 1


def test_seeds_are_distinct_and_stable():
    seeds = {replicate_seeds(2024, sc, st_, r) for sc in (1, 2) for st_ in "ab" for r in range(5)}
    assert len({s for pair in seeds for s in pair}) == 40
    assert replicate_seeds(2024, 1, "a", 0) == replicate_seeds(2024, 1, "a", 0)


def test_empty_strategy_list_keeps_metadata():
    r = run_replicate(1, "a", 0, SimConfig(n=300, p=10, strategies=()))
    assert r.strategies == () and r.m_alpha_hat is None and r.n_treated > 0


def test_oracle_union_on_scenario_one():
    r = run_replicate(1, "a", 0, SimConfig(n=500, p=10, strategies=("O-UNI", "O-INT", "O-OUT")))
    sets = {s.strategy: s.adjustment_set for s in r.strategies}
    assert sets == {"O-UNI": (1, 2, 3, 4, 5, 6), "O-INT": (3, 4), "O-OUT": (3, 4, 5, 6)}
    assert r.m_alpha_hat is None and all(s.ok for s in r.strategies)


def test_aggregate_is_order_invariant():
    recs = run_grid([2], ["a", "c"], 3, SMALL)
    shuffled = list(recs)
    random.Random(0).shuffle(shuffled)
    a, b = aggregate(recs), aggregate(shuffled)
    assert a.selection == b.selection and a.coverage == b.coverage and a.records == b.records


def test_failures_counted_and_empty_cells_reported():
    recs = [fake_record(0, 0.1), fake_record(1, 0.3, covered=False), fake_record(2, 0.0, ok=False)]
    rep = aggregate(recs)
    m = rep.coverage[(2, "a", "UNI")]
    assert (m.replicates, m.failures, m.coverage) == (2, 1, 0.5)
    with pytest.raises(EmptyCell) as info:
        aggregate([fake_record(0, 0.0, ok=False)])
    assert (2, "a", "UNI") in info.value.cells


def test_export_format(tmp_path):
    recs = run_grid([2], ["a"], 2, SMALL)
    files = export(aggregate(recs), tmp_path)
    with open(files["coverage.csv"]) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0])[:6] == ["scenario", "setting", "strategy", "coverage", "bias", "sd"]
    assert {r["strategy"] for r in rows} == set(SMALL.strategies)
    for r in rows:
        for key in ("bias", "sd", "rmse"):
            digits = r[key].lstrip("-").split("e")[0].replace(".", "").lstrip("0")
            assert len(digits) <= 6
    with open(files["selection_metrics.csv"]) as fh:
        sel = list(csv.DictReader(fh))
    assert list(sel[0])[:7] == ["scenario", "setting", "model", "over", "under", "fn", "fp"]
    with open(files["replicates.csv"]) as fh:
        long = list(csv.DictReader(fh))
    assert len(long) == 2 * len(SMALL.strategies)


def test_single_replicate_coverage_is_binary(tmp_path):
    rep = aggregate(run_grid([1], ["a"], 1, SMALL))
    assert all(v.coverage in (0.0, 1.0) and v.sd == 0.0 for v in rep.coverage.values())


def test_worker_count_does_not_change_records():
    a = run_grid([3], ["b"], 3, SMALL, workers=1)
    b = run_grid([3], ["b"], 3, SMALL, workers=2)
    assert a == b


def test_unknown_strategy_rejected():
    with pytest.raises(ValueError):
        SimConfig(strategies=("UNI", "BOTH"))
    assert SimConfig().om_floor("d") == 0.3 and SimConfig().om_floor("a") == 0.1


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="control-arm linear projection onto X3, X4 sits just below the 0.3 floor, "
                                       "so they enter in many replicates at n = 2000; see the decisions ledger")
def test_scenario1_setting_c_outcome_underselection(sim_cell):
    m = aggregate(sim_cell(1, "c")).selection[(1, "c", "beta")]
    assert m.under >= 0.95 and abs(m.fn - 2) <= 0.2


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="at n = 2000 the biased INT/OUT fits still cover in about a quarter of "
                                       "replicates because the SE is wider; see the decisions ledger")
def test_scenario4_setting_c_coverage(sim_cell):
    cov = aggregate(sim_cell(4, "c")).coverage
    assert cov[(4, "c", "UNI")].coverage >= 0.90
    assert cov[(4, "c", "INT")].coverage <= 0.10 and cov[(4, "c", "OUT")].coverage <= 0.10


@pytest.mark.slow
def test_scenario4_setting_c_coverage_n5000(sim_cell):
    cov = aggregate(sim_cell(4, "c", reps=100, n=5000)).coverage
    assert cov[(4, "c", "UNI")].coverage >= 0.90
    assert cov[(4, "c", "INT")].coverage <= 0.10 and cov[(4, "c", "OUT")].coverage <= 0.10


@pytest.mark.slow
@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_oracle_coverage_setting_a(sim_cell, scenario):
    # 200 replicates at desk scale, so the band is widened to the binomial 99% range
    cov = aggregate(sim_cell(scenario, "a")).coverage
    for s in ("O-UNI", "O-INT", "O-OUT"):
        assert 0.90 <= cov[(scenario, "a", s)].coverage <= 0.99

