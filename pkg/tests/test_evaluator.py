import dataclasses
import datetime as dt
import json

import numpy as np
import pytest

from advnews.adversary import AttackSpec
from advnews.engine import MarketFrame
from advnews.evaluator import (EvalRecord, Experiment, _check_isolation, aggregate, dollar_impact,
                               paired_run, read_records, render_summary, sweep, write_records)
from advnews.fixtures import TARGET_DAY, TARGET_TICKER
from advnews.market_data import Calendar, Portfolio
from advnews.news import Headline, HeadlineStore, NewsAnalyzer

D = dt.date(2024, 3, 1)


def rec(dcr, ticker="NVDA", day=D, kind="homoglyph", flip=False):
    return EvalRecord(kind, ticker, day, headlines_touched=1, action_flip=flip, delta_cr=dcr)


def test_dollar_impact():
    assert dollar_impact(1_000_000, -1.72) == -17_200
    assert dollar_impact(123.0, 0.0) == 0
    assert dollar_impact(2_000_000, -3.2) == -64_000


def test_aggregate_arithmetic():
    r = aggregate([rec(-2.0, "NVDA"), rec(1.0, "TSLA", flip=True)])["kinds"]["homoglyph"]
    assert r["mean_delta_cr"] == -0.5 and r["mean_abs_delta_cr"] == 1.5
    assert r["worst"] == {"value": -2.0, "ticker": "NVDA", "date": "2024-03-01"}
    assert r["best"]["value"] == 1.0 and r["best"]["ticker"] == "TSLA"
    assert r["days_with_decision_change_pct"] == 50.0


def test_aggregate_all_zero():
    r = aggregate([rec(0.0), rec(0.0, "TSLA")])["kinds"]["homoglyph"]
    assert r["mean_delta_cr"] == 0 and r["mean_abs_delta_cr"] == 0
    assert r["days_with_decision_change_pct"] == 0


def test_aggregate_needs_records():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_matches_brute_force(experiment):
    records = sweep(experiment.plan(), experiment)
    report = aggregate(records)
    for kind, stats in report["kinds"].items():
        rs = [r for r in records if r.kind == kind]
        d = [r.delta_cr for r in rs]
        assert stats["n"] == len(rs)
        assert stats["mean_delta_cr"] == pytest.approx(sum(d) / len(d), abs=1e-12)
        assert stats["mean_abs_delta_cr"] == pytest.approx(sum(map(abs, d)) / len(d), abs=1e-12)
        assert stats["worst"]["value"] == min(d) and stats["best"]["value"] == max(d)
        assert stats["days_with_decision_change_pct"] == pytest.approx(
            100 * sum(r.action_flip for r in rs) / len(rs))
        assert stats["trials_reducing_cr_pct"] == pytest.approx(100 * sum(x < 0 for x in d) / len(d))
        touched = sum(r.headlines_touched for r in rs)
        assert stats["misrouting_rate_pct"] == pytest.approx(
            100 * sum(r.routing_failures for r in rs) / touched)
        flips = sum(e.flipped for r in rs for e in r.effects)
        scored = sum(e.delta is not None for r in rs for e in r.effects)
        assert stats["flip_rate_pct"] == pytest.approx(100 * flips / scored)
        for t, sub in stats["by_ticker"].items():
            assert sub["n"] == sum(r.ticker == t for r in rs)
        vol = stats["by_news_volume"]
        assert vol["low"]["n"] + vol["mid"].get("n", 0) + vol["high"].get("n", 0) == len(rs)
        for key in ("days_with_decision_change_pct", "trials_reducing_cr_pct",
                    "misrouting_rate_pct", "flip_rate_pct", "downstream_divergence_pct"):
            assert 0 <= stats[key] <= 100
        assert stats["worst"]["value"] <= stats["mean_delta_cr"] <= stats["best"]["value"]


def test_records_invariants(experiment):
    I0 = experiment.costs.initial_capital
    for r in sweep(experiment.plan(), experiment):
        assert r.delta_cr == r.attacked_cr - r.clean_cr
        assert r.dollar_impact == I0 * r.delta_cr / 100


def test_sweep_is_deterministic_and_order_independent(experiment, run_config, tmp_path):
    from advnews.cli import build_experiment
    a = sweep(experiment.plan(), experiment, jobs=1)
    b = sweep(experiment.plan(), build_experiment(run_config), jobs=4)
    write_records(a, tmp_path / "a.csv")
    write_records(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    ja = json.dumps(aggregate(a), sort_keys=True)
    assert ja == json.dumps(aggregate(b), sort_keys=True)
    keys = [(r.kind, r.ticker, r.date) for r in a]
    assert keys == sorted(keys, key=lambda k: (k[0] != "homoglyph", k[1], k[2]))


def test_records_csv_roundtrip(experiment, tmp_path):
    recs = sweep(experiment.plan(), experiment)
    write_records(recs, tmp_path / "r.csv")
    back = read_records(tmp_path / "r.csv")
    assert json.dumps(aggregate(back), sort_keys=True) == json.dumps(aggregate(recs), sort_keys=True)
    write_records(back, tmp_path / "r2.csv")
    assert (tmp_path / "r.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()


def test_errors_are_isolated(experiment):
    plan = experiment.plan(["hidden_text"])
    bad = plan.targets[3]

    def factory(spec):
        if (spec.date, spec.ticker) == bad:
            def boom(h):
                raise RuntimeError("scorer exploded")
            return boom
        return None

    recs = sweep(plan, experiment, transform_factory=factory)
    failed = [r for r in recs if not r.ok]
    assert len(failed) == 1 and "scorer exploded" in failed[0].error
    report = aggregate(recs)
    assert report["aborted"][0]["ticker"] == bad[1]
    assert report["kinds"]["hidden_text"]["n"] == len(recs) - 1
    assert "aborted" in render_summary(report)


def test_noop_transform_gives_zero(experiment):
    day = experiment.market.dates[TARGET_DAY]
    r = paired_run(AttackSpec("homoglyph", TARGET_TICKER, day), experiment, transform=lambda h: h)
    assert r.delta_cr == 0.0 and not r.action_flip and not r.downstream_divergence


def test_homoglyph_routing_on_target(experiment):
    day = experiment.market.dates[TARGET_DAY]
    r = paired_run(AttackSpec("homoglyph", TARGET_TICKER, day), experiment)
    assert r.routing_failures == r.headlines_touched == 2
    assert r.attacked_count == r.clean_count - r.headlines_touched == 0


def test_isolation_check():
    a = HeadlineStore([Headline("a", D, "x"), Headline("b", D, "y")])
    b = a.replace({1: Headline("b", D, "z")})
    _check_isolation(a, b, [1])
    with pytest.raises(AssertionError):
        _check_isolation(a, b, [0])


def small_grid_experiment():
    tickers = ("NVDA", "TSLA", "AAPL")
    days = tuple(D + dt.timedelta(days=k) for k in range(5))
    closes = np.array([[100.0 + k, 50.0 - k, 80.0 + 2 * k] for k in range(5)])
    market = MarketFrame(tickers, Calendar(days), closes.copy(), closes)
    names = {"NVDA": "Nvidia", "TSLA": "Tesla", "AAPL": "Apple"}
    store = HeadlineStore([Headline(f"{t}{k}", d, f"{names[t]} beats estimates")
                           for k, d in enumerate(days) for t in tickers])
    pf = Portfolio.default(tickers)
    return Experiment(market, np.zeros((5, 3)), store, pf, NewsAnalyzer(pf))


def test_grid_cardinality():
    exp = small_grid_experiment()
    plan = exp.plan()
    assert len(plan.targets) == 15
    recs = sweep(plan, exp)
    assert len(recs) == 30 and all(r.ok for r in recs)


def test_incremental_rerun_matches_full_pipeline(experiment):
    for r_spec in experiment.plan().specs()[::5]:
        rec = paired_run(r_spec, experiment)
        full = dataclasses.replace(experiment, analyzer=NewsAnalyzer(experiment.portfolio))
        _, _, _, res = full.run_store(experiment.apply(r_spec).store)
        assert res.equity.tobytes() == rec.attacked_equity.tobytes()
        assert res.trade_log_bytes() == rec.attacked_result.trade_log_bytes()
