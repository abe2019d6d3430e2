"""Paired clean-versus-attacked backtests and their aggregation."""

from __future__ import annotations

import csv
import datetime as dt
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .adversary import (DEFAULT_PAYLOAD, KINDS, AppliedAttack, AttackSpec, SweepPlan, apply,
                        enumerate_targets)
from .engine import BacktestResult, CostConfig, Decision, MarketFrame, StrategyParams, run_backtest
from .homoglyphs import DEFAULT_TABLE, HomoglyphTable
from .market_data import Portfolio
from .news import (Headline, HeadlineSignal, HeadlineStore, NewsAnalyzer, daily_tables,
                   sentiment_matrix, smooth)


def dollar_impact(initial_capital: float, delta_cr: float) -> float:
    """Currency gained (negative: lost) for a change of ``delta_cr`` percentage points."""
    if not initial_capital > 0:
        raise ValueError("initial capital must be positive")
    return initial_capital * delta_cr / 100


def _sign(x: float | None) -> int:
    if x is None or x == 0:
        return 0
    return 1 if x > 0 else -1


@dataclass
class HeadlineEffect:
    headline_id: str
    clean_polarity: float | None
    attacked_polarity: float | None
    clean_ticker: str | None
    attacked_ticker: str | None

    @property
    def delta(self) -> float | None:
        if self.clean_polarity is None or self.attacked_polarity is None:
            return None
        return self.attacked_polarity - self.clean_polarity

    @property
    def flipped(self) -> bool:
        a, b = _sign(self.clean_polarity), _sign(self.attacked_polarity)
        return a != 0 and b != 0 and a != b

    @property
    def misrouted(self) -> bool:
        return self.attacked_ticker != self.clean_ticker


@dataclass
class EvalRecord:
    kind: str
    ticker: str
    date: dt.date
    headlines_touched: int = 0
    noop_transforms: int = 0
    routing_failures: int = 0
    headlines_scored: int = 0
    polarity_flips: int = 0
    mean_delta_sentiment: float | None = None
    clean_count: int = 0
    attacked_count: int = 0
    clean_day_mean: float | None = None
    attacked_day_mean: float | None = None
    delta_sbar: float = 0.0
    action_clean: str = ""
    action_attacked: str = ""
    action_flip: bool = False
    downstream_divergence: bool = False
    clean_cr: float = 0.0
    attacked_cr: float = 0.0
    delta_cr: float = 0.0
    dollar_impact: float = 0.0
    status: str = "ok"
    error: str = ""
    # kept in memory only
    effects: list[HeadlineEffect] = field(default_factory=list, repr=False)
    attacked_equity: np.ndarray | None = field(default=None, repr=False)
    attacked_result: BacktestResult | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def delta_day_mean(self) -> float | None:
        if self.clean_day_mean is None or self.attacked_day_mean is None:
            return None
        return self.attacked_day_mean - self.clean_day_mean


CSV_FIELDS = [f.name for f in fields(EvalRecord)
              if f.name not in ("effects", "attacked_equity", "attacked_result")]
_INT_FIELDS = {"headlines_touched", "noop_transforms", "routing_failures", "headlines_scored",
               "polarity_flips", "clean_count", "attacked_count"}
_FLOAT_FIELDS = {"delta_sbar", "clean_cr", "attacked_cr", "delta_cr", "dollar_impact"}
_OPT_FLOAT_FIELDS = {"mean_delta_sentiment", "clean_day_mean", "attacked_day_mean"}
_BOOL_FIELDS = {"action_flip", "downstream_divergence"}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dt.date):
        return v.isoformat()
    return str(v)


def write_records(records: Sequence[EvalRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in CSV_FIELDS])


def read_records(path) -> list[EvalRecord]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k in CSV_FIELDS:
                v = row.get(k, "")
                if k == "date":
                    kw[k] = dt.date.fromisoformat(v)
                elif k in _INT_FIELDS:
                    kw[k] = int(v)
                elif k in _FLOAT_FIELDS:
                    kw[k] = float(v)
                elif k in _OPT_FLOAT_FIELDS:
                    kw[k] = float(v) if v != "" else None
                elif k in _BOOL_FIELDS:
                    kw[k] = v == "true"
                else:
                    kw[k] = v
            out.append(EvalRecord(**kw))
    return out


def write_effects(records: Sequence[EvalRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "ticker", "date", "headline_id", "clean_ticker", "attacked_ticker",
                    "clean_polarity", "attacked_polarity", "delta", "flip"])
        for r in records:
            for e in r.effects:
                w.writerow([r.kind, r.ticker, r.date.isoformat(), e.headline_id,
                            e.clean_ticker or "unrecognized", e.attacked_ticker or "unrecognized",
                            _fmt(e.clean_polarity), _fmt(e.attacked_polarity), _fmt(e.delta),
                            _fmt(e.flipped)])


@dataclass
class CleanRun:
    signals: list[HeadlineSignal]
    associations: dict[str, str | None]
    sbar: np.ndarray
    counts: np.ndarray
    result: BacktestResult


@dataclass
class Experiment:
    """Everything a paired run shares; treated as read-only once built."""

    market: MarketFrame
    delta: np.ndarray
    store: HeadlineStore
    portfolio: Portfolio
    analyzer: NewsAnalyzer
    params: StrategyParams = field(default_factory=StrategyParams)
    costs: CostConfig = field(default_factory=CostConfig)
    window: int = 7
    fill: str = "skip"
    table: HomoglyphTable = DEFAULT_TABLE
    payload: str = DEFAULT_PAYLOAD
    concealment: str = "display_none"
    simulate: Callable | None = None
    _clean: CleanRun | None = field(default=None, init=False, repr=False)

    @property
    def tickers(self) -> tuple[str, ...]:
        return self.market.tickers

    def backtest(self, sbar: np.ndarray) -> BacktestResult:
        return run_backtest(self.market, self.delta, sbar, self.params, self.costs, self.simulate)

    def run_store(self, store: HeadlineStore) -> tuple[list[HeadlineSignal], np.ndarray, np.ndarray, BacktestResult]:
        """Full pipeline over a store, with no caching shortcuts beyond per-headline memo."""
        signals = self.analyzer.analyze(store)
        sbar, counts = sentiment_matrix(signals, self.tickers, self.market.calendar,
                                        self.window, self.fill)
        return signals, sbar, counts, self.backtest(sbar)

    def clean(self) -> CleanRun:
        if self._clean is None:
            signals, sbar, counts, result = self.run_store(self.store)
            assoc = {s.headline_id: s.ticker for s in signals}
            self._clean = CleanRun(signals, assoc, sbar, counts, result)
        return self._clean

    def plan(self, kinds: Sequence[str] = KINDS) -> SweepPlan:
        return enumerate_targets(self.store, self.portfolio, self.market.calendar,
                                 self.clean().associations, kinds)

    def sentiment_column(self, signals: Sequence[HeadlineSignal], ticker: str) -> np.ndarray:
        tables = daily_tables((s for s in signals if s.ticker == ticker), [ticker])[ticker]
        means = {d: ds.mean for d, ds in tables.items()}
        return np.array([smooth(means, d, self.window, self.fill) for d in self.market.dates])

    def apply(self, spec: AttackSpec, transform: Callable[[Headline], Headline] | None = None
              ) -> AppliedAttack:
        return apply(spec, self.store, self.clean().associations, self.portfolio, self.table,
                     self.payload, self.concealment, transform)


def _check_isolation(clean: HeadlineStore, attacked: HeadlineStore, touched: Sequence[int]) -> None:
    allowed = set(touched)
    if len(clean) != len(attacked):
        raise AssertionError("attacked store changed size")
    for i, (a, b) in enumerate(zip(clean, attacked)):
        if i not in allowed and a is not b and a != b:
            raise AssertionError(f"headline {a.id} outside the target was modified")


def paired_run(spec: AttackSpec, exp: Experiment,
               transform: Callable[[Headline], Headline] | None = None) -> EvalRecord:
    """Attack one (day, stock), rerun, and compare against the shared clean run."""
    clean = exp.clean()
    applied = exp.apply(spec, transform)
    _check_isolation(exp.store, applied.store, applied.touched)

    signals = list(clean.signals)
    touched_new = [applied.store[i] for i in applied.touched]
    for i, sig in zip(applied.touched, exp.analyzer.analyze(touched_new)):
        signals[i] = sig

    # Attacked headlines can only move sentiment of the target and of the
    # tickers they get (mis)routed to.
    affected = {spec.ticker}
    affected.update(signals[i].ticker for i in applied.touched if signals[i].ticker)
    sbar = clean.sbar.copy()
    cal = exp.market.calendar
    for t in affected:
        j = exp.tickers.index(t)
        sbar[:, j] = exp.sentiment_column(signals, t)
    result = exp.backtest(sbar)

    j = exp.tickers.index(spec.ticker)
    i_day = cal.index(spec.date)
    att_tables = daily_tables((s for s in signals if s.ticker == spec.ticker), [spec.ticker])[spec.ticker]
    cln_tables = daily_tables((s for s in clean.signals if s.ticker == spec.ticker), [spec.ticker])[spec.ticker]
    att_day = att_tables.get(spec.date)
    cln_day = cln_tables.get(spec.date)

    model_clean = exp.analyzer.model_scores([exp.store[i] for i in applied.touched], spec.ticker)
    model_att = exp.analyzer.model_scores(touched_new, spec.ticker)
    effects = [
        HeadlineEffect(exp.store[i].id, pc, pa, clean.signals[i].ticker, signals[i].ticker)
        for i, pc, pa in zip(applied.touched, model_clean, model_att)
    ]
    scored = [e for e in effects if e.delta is not None]

    a_clean = int(clean.result.decisions[i_day, j])
    a_att = int(result.decisions[i_day, j])
    delta_cr = result.cr - clean.result.cr
    return EvalRecord(
        kind=spec.kind,
        ticker=spec.ticker,
        date=spec.date,
        headlines_touched=len(applied.touched),
        noop_transforms=len(applied.noops),
        routing_failures=sum(e.misrouted for e in effects),
        headlines_scored=len(scored),
        polarity_flips=sum(e.flipped for e in scored),
        mean_delta_sentiment=(math.fsum(e.delta for e in scored) / len(scored)) if scored else None,
        clean_count=cln_day.count if cln_day else 0,
        attacked_count=att_day.count if att_day else 0,
        clean_day_mean=cln_day.mean if cln_day else None,
        attacked_day_mean=att_day.mean if att_day else None,
        delta_sbar=float(sbar[i_day, j] - clean.sbar[i_day, j]),
        action_clean=Decision(a_clean).label,
        action_attacked=Decision(a_att).label,
        action_flip=a_clean != a_att,
        downstream_divergence=not np.array_equal(result.decisions, clean.result.decisions),
        clean_cr=clean.result.cr,
        attacked_cr=result.cr,
        delta_cr=delta_cr,
        dollar_impact=dollar_impact(exp.costs.initial_capital, delta_cr),
        effects=effects,
        attacked_equity=result.equity,
        attacked_result=result,
    )


def _kind_order(kind: str) -> int:
    return KINDS.index(kind) if kind in KINDS else len(KINDS)


def sweep(plan: SweepPlan, exp: Experiment, jobs: int = 1,
          transform_factory: Callable[[AttackSpec], Callable] | None = None) -> list[EvalRecord]:
    """One record per (target, kind), sorted by (kind, ticker, date)."""
    if len(plan) == 0:
        raise ValueError("empty sweep plan")
    exp.clean()  # computed once, before any worker starts

    def one(spec: AttackSpec) -> EvalRecord:
        try:
            fn = transform_factory(spec) if transform_factory else None
            return paired_run(spec, exp, fn)
        except Exception as exc:  # isolate per-target failures
            return EvalRecord(spec.kind, spec.ticker, spec.date, status="error",
                              error=f"{type(exc).__name__}: {exc}")

    specs = plan.specs()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(one, specs))
    else:
        records = [one(s) for s in specs]
    records.sort(key=lambda r: (_kind_order(r.kind), r.ticker, r.date))
    return records


# -- aggregation ------------------------------------------------------------

def _case(r: EvalRecord) -> dict:
    return {"value": r.delta_cr, "ticker": r.ticker, "date": r.date.isoformat()}


def _pct(num: float, den: float) -> float | None:
    return 100.0 * num / den if den else None


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _group_stats(rs: Sequence[EvalRecord]) -> dict:
    d = [r.delta_cr for r in rs]
    return {
        "n": len(rs),
        "days_with_decision_change_pct": _pct(sum(r.action_flip for r in rs), len(rs)),
        "mean_delta_cr": _mean(d),
        "mean_abs_delta_cr": _mean([abs(x) for x in d]),
        "worst": _case(min(rs, key=lambda r: r.delta_cr)),
        "best": _case(max(rs, key=lambda r: r.delta_cr)),
    }


def volume_terciles(volumes: Sequence[int]) -> tuple[float, float]:
    q1, q2 = np.quantile(np.asarray(volumes, dtype=float), [1 / 3, 2 / 3])
    return float(q1), float(q2)


def aggregate(records: Sequence[EvalRecord]) -> dict:
    if not records:
        raise ValueError("no records to aggregate")
    report: dict = {"kinds": {}, "n_records": len(records),
                    "aborted": [{"kind": r.kind, "ticker": r.ticker, "date": r.date.isoformat(),
                                 "error": r.error} for r in records if not r.ok]}
    kinds = sorted({r.kind for r in records}, key=_kind_order)
    for kind in kinds:
        rs = [r for r in records if r.kind == kind and r.ok]
        if not rs:
            report["kinds"][kind] = {"n": 0}
            continue
        stats = _group_stats(rs)
        touched = sum(r.headlines_touched for r in rs)
        scored = sum(r.headlines_scored for r in rs)
        stats.update({
            "downstream_divergence_pct": _pct(sum(r.downstream_divergence for r in rs), len(rs)),
            "trials_reducing_cr_pct": _pct(sum(r.delta_cr < 0 for r in rs), len(rs)),
            "mean_dollar_impact": _mean([r.dollar_impact for r in rs]),
            "headlines_touched": touched,
            "misrouting_rate_pct": _pct(sum(r.routing_failures for r in rs), touched),
            "flip_rate_pct": _pct(sum(r.polarity_flips for r in rs), scored),
        })
        by_ticker = {}
        for t in sorted({r.ticker for r in rs}):
            by_ticker[t] = _group_stats([r for r in rs if r.ticker == t])
        stats["by_ticker"] = by_ticker
        q1, q2 = volume_terciles([r.headlines_touched for r in rs])
        strata = {
            "low": [r for r in rs if r.headlines_touched <= q1],
            "mid": [r for r in rs if q1 < r.headlines_touched <= q2],
            "high": [r for r in rs if r.headlines_touched > q2],
        }
        stats["by_news_volume"] = {
            "cutpoints": [q1, q2],
            **{k: (_group_stats(v) if v else {"n": 0}) for k, v in strata.items()},
        }
        report["kinds"][kind] = stats
    return report


def _f(v, spec=".2f"):
    return "n/a" if v is None else format(v, spec)


def render_summary(report: dict) -> str:
    """Plain-text table, one column per attack kind."""
    kinds = list(report["kinds"])
    rows = [
        ("Targets", lambda s: str(s["n"])),
        ("Days with decision change [%]", lambda s: _f(s.get("days_with_decision_change_pct"), ".1f")),
        ("Any downstream divergence [%]", lambda s: _f(s.get("downstream_divergence_pct"), ".1f")),
        ("Mean dCR [pp]", lambda s: _f(s.get("mean_delta_cr"))),
        ("Mean |dCR| [pp]", lambda s: _f(s.get("mean_abs_delta_cr"))),
        ("Worst case [pp]", lambda s: f"{s['worst']['value']:+.2f} ({s['worst']['ticker']}, {s['worst']['date']})" if "worst" in s else "n/a"),
        ("Best case [pp]", lambda s: f"{s['best']['value']:+.2f} ({s['best']['ticker']}, {s['best']['date']})" if "best" in s else "n/a"),
        ("Trials reducing CR [%]", lambda s: _f(s.get("trials_reducing_cr_pct"), ".1f")),
        ("Misrouting rate [%]", lambda s: _f(s.get("misrouting_rate_pct"), ".1f")),
        ("Polarity flip rate [%]", lambda s: _f(s.get("flip_rate_pct"), ".1f")),
        ("Mean dollar impact", lambda s: _f(s.get("mean_dollar_impact"), ",.0f")),
    ]
    width = max(len(r[0]) for r in rows) + 2
    cols = [[fn(report["kinds"][k]) for _, fn in rows] for k in kinds]
    colw = [max(len(k), *(len(c) for c in col)) + 2 for k, col in zip(kinds, cols)]
    lines = ["Metric".ljust(width) + "".join(k.rjust(w) for k, w in zip(kinds, colw))]
    lines.append("-" * len(lines[0]))
    for i, (name, _) in enumerate(rows):
        lines.append(name.ljust(width) + "".join(col[i].rjust(w) for col, w in zip(cols, colw)))
    if report.get("aborted"):
        lines.append(f"\n{len(report['aborted'])} target(s) aborted; see summary.json")
    return "\n".join(lines) + "\n"
