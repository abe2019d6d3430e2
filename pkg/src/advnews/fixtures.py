"""Deterministic synthetic data: a small backtest bundle and a labeled headline corpus.

The bundle has three assets over 60 test days with 120 days of history
before them.  One (day, stock) pair is scripted so that a hidden-text attack
turns a Long into a Short right before the stock rallies.
"""

from __future__ import annotations

import datetime as dt
import html
import json
import shutil
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .homoglyphs import DEFAULT_COMPANIES
from .market_data import Bar, BarSeries, write_ohlcv
from .news import Headline, HeadlineStore

BUNDLE_TICKERS = ("NVDA", "TSLA", "AAPL")
TEST_START = dt.date(2024, 2, 1)
N_HISTORY = 120
N_TEST = 60
TARGET_TICKER = "NVDA"
TARGET_DAY = 20          # index into the test window
SEED = 2024

HOLIDAYS = {
    dt.date(2023, 9, 4), dt.date(2023, 11, 23), dt.date(2023, 12, 25),
    dt.date(2024, 1, 1), dt.date(2024, 1, 15), dt.date(2024, 2, 19), dt.date(2024, 3, 29),
}

BASE_PRICE = {"NVDA": 480.0, "TSLA": 190.0, "AAPL": 185.0}

POSITIVE = (
    "{name} beats quarterly estimates as demand stays strong",
    "{name} upgraded to outperform at major broker",
    "Analysts turn bullish on {name} growth outlook",
    "{name} profit tops forecasts",
    "{name} rallies on upbeat guidance",
    "{name} R&D budget climbs",
)
NEGATIVE = (
    "{name} shares slump after earnings miss",
    "{name} faces probe over accounting practices",
    "{name} downgraded on weak demand",
    "{name} warns of slowing sales",
)
NEUTRAL = (
    "{name} to hold annual shareholder meeting in May",
    "{name} names new chief financial officer",
)
TEMPLATES = {"positive": POSITIVE, "negative": NEGATIVE, "neutral": NEUTRAL}

TARGET_HEADLINES = (
    ("h3", "Nvidia shares jump 9% to a record close"),
    ("a", "NVDA beats estimates on data-center demand"),
)

UNRELATED = (
    "Oil prices climb as OPEC weighs output",
    "Desk notes | Software: earnings calendar for PRGS, BRZE and CXM",
    "Treasury yields steady ahead of jobs report",
    "European stocks open flat; luxury names in focus",
    "Fed officials signal patience on rate path",
    "Gold edges higher as dollar softens",
    "Bitcoin ETFs draw inflows for third week",
    "Retail sales data due Thursday",
)

MULTI = (
    ("MSFT", "Microsoft and Nvidia extend AI partnership", "neutral"),
    ("AMZN", "Amazon and Apple square off in streaming push", "neutral"),
    ("GOOGL", "Alphabet beats Meta in quarterly ad growth", "positive"),
    ("JPM", "JPMorgan Chase advises Exxon Mobil on bond sale", "neutral"),
    ("TSLA", "Tesla price cuts weigh on rivals", "negative"),
    ("LLY", "Eli Lilly wins approval for weight-loss drug", "positive"),
)


def trading_days(start: dt.date, n_before: int, n_after: int) -> list[dt.date]:
    """Weekdays minus a fixed holiday list; ``n_before`` days precede ``start``."""
    def ok(d):
        return d.weekday() < 5 and d not in HOLIDAYS

    before = []
    d = start - dt.timedelta(days=1)
    while len(before) < n_before:
        if ok(d):
            before.append(d)
        d -= dt.timedelta(days=1)
    after = []
    d = start
    while len(after) < n_after:
        if ok(d):
            after.append(d)
        d += dt.timedelta(days=1)
    return before[::-1] + after


def make_prices(seed: int = SEED) -> dict[str, BarSeries]:
    days = trading_days(TEST_START, N_HISTORY, N_TEST)
    rng = np.random.default_rng(seed)
    out = {}
    n = len(days)
    for ticker in BUNDLE_TICKERS:
        r = rng.normal(0.0004, 0.015, n)
        if ticker == TARGET_TICKER:
            # steady rally right after the target day
            k = N_HISTORY + TARGET_DAY
            r[k + 1:k + 13] = 0.012 + rng.normal(0, 0.002, 12)
        closes = BASE_PRICE[ticker] * np.exp(np.cumsum(r))
        gaps = np.exp(rng.normal(0, 0.004, n))
        wick = np.abs(rng.normal(0, 0.005, (n, 2)))
        vols = rng.integers(2_000_000, 9_000_000, n)
        bars = []
        prev = BASE_PRICE[ticker]
        for i, d in enumerate(days):
            o = round(float(prev * gaps[i]), 2)
            c = round(float(closes[i]), 2)
            hi = max(round(max(o, c) * (1 + float(wick[i, 0])), 2), o, c)
            lo = min(round(min(o, c) * (1 - float(wick[i, 1])), 2), o, c)
            bars.append(Bar(d, o, hi, lo, c, float(vols[i])))
            prev = c
        out[ticker] = BarSeries(ticker, tuple(bars))
    return out


def render(text: str, variant: str, name: str, hid: str) -> str:
    """One of a few markup styles a news feed might use."""
    esc = html.escape(text, quote=False)
    if variant == "plain":
        return esc
    if variant == "a":
        return f'<a href="https://news.example.com/{hid}">{esc}</a>'
    if variant == "h3":
        return f"<h3>{esc}</h3>"
    if variant == "b":
        i = text.find(name)
        if i < 0:
            return f"<b>{esc}</b>"
        return (html.escape(text[:i], quote=False) + f"<b>{html.escape(name, quote=False)}</b>"
                + html.escape(text[i + len(name):], quote=False))
    if variant == "div":
        return f'<div class="headline"><span>{esc}</span></div>'
    raise ValueError(f"unknown variant {variant!r}")


VARIANTS = ("plain", "a", "h3", "b", "div")


def _name_for(ticker: str, k: int) -> str:
    names = (ticker, *DEFAULT_COMPANIES.get(ticker, ()))
    return names[k % len(names)]


def make_headlines(seed: int = SEED) -> HeadlineStore:
    days = trading_days(TEST_START, 0, N_TEST)
    rng = np.random.default_rng(seed + 1)
    items: list[Headline] = []

    def add(day: dt.date, raw: str, source="synthetic-wire"):
        items.append(Headline(f"n{len(items) + 1:04d}", day, raw, source))

    schedule = {
        "NVDA": [(3, "positive"), (9, "negative"), (36, "negative"), (47, "positive"), (55, "negative")],
        "TSLA": [(d, p) for d, p in zip((1, 5, 8, 13, 17, 22, 26, 30, 33, 39, 44, 50, 57),
                                        "pnpnuppnnpunp")],
        "AAPL": [(d, p) for d, p in zip((2, 6, 11, 15, 19, 24, 28, 32, 38, 42, 48, 53, 58),
                                        "ppnupnpnpupnn")],
    }
    pol = {"p": "positive", "n": "negative", "u": "neutral"}
    events = []
    for ticker, rows in schedule.items():
        for d, p in rows:
            events.append((d, BUNDLE_TICKERS.index(ticker), ticker, pol.get(p, p)))
    events.sort()
    k = 0
    for d, _, ticker, polarity in events:
        per_day = 2 if rng.random() < 0.3 else 1
        for _ in range(per_day):
            tmpl = TEMPLATES[polarity][int(rng.integers(len(TEMPLATES[polarity])))]
            name = _name_for(ticker, k)
            text = tmpl.format(name=name)
            add(days[d], render(text, VARIANTS[k % len(VARIANTS)], name, f"n{len(items) + 1:04d}"))
            k += 1
    # the scripted target: the only NVDA news within a week either side
    t_star = days[TARGET_DAY]
    for variant, text in TARGET_HEADLINES:
        name = "Nvidia" if text.startswith("Nvidia") else "NVDA"
        add(t_star, render(text, variant, name, f"n{len(items) + 1:04d}"))
    for i, text in enumerate(UNRELATED):
        add(days[(7 * i + 4) % N_TEST], render(text, VARIANTS[i % len(VARIANTS)], "", f"u{i}"))
    # news dated on a weekend and just before the window are never targets
    add(dt.date(2024, 2, 10), render("Tesla expands charging network", "plain", "", ""))
    add(dt.date(2024, 1, 30), render("Apple shares rise ahead of results", "h3", "", ""))
    items.sort(key=lambda h: (h.date, h.id))
    return HeadlineStore(items)


@dataclass(frozen=True)
class LabeledHeadline:
    headline: Headline
    ticker: str | None
    polarity: str

    def to_json(self) -> dict:
        return {**self.headline.to_json(), "label": self.ticker, "polarity": self.polarity}

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledHeadline":
        return cls(Headline.from_json(obj), obj.get("label"), obj["polarity"])


def make_corpus() -> list[LabeledHeadline]:
    """Labeled headlines over all ten default tickers and every alias."""
    days = trading_days(TEST_START, 0, N_TEST)
    out = []
    k = 0

    def add(text, name, ticker, polarity):
        nonlocal k
        hid = f"c{k + 1:04d}"
        raw = render(text, VARIANTS[k % len(VARIANTS)], name, hid)
        out.append(LabeledHeadline(Headline(hid, days[k % N_TEST], raw, "synthetic-corpus"),
                                   ticker, polarity))
        k += 1

    order = [("positive", t) for t in POSITIVE[:4]] + [("negative", t) for t in NEGATIVE[:4]] \
        + [("neutral", t) for t in NEUTRAL]
    for ticker, companies in DEFAULT_COMPANIES.items():
        for name in (ticker, *companies):
            for polarity, tmpl in order:
                add(tmpl.format(name=name), name, ticker, polarity)
    add(TARGET_HEADLINES[0][1], "Nvidia", "NVDA", "positive")
    for ticker, text, polarity in MULTI:
        add(text, "", ticker, polarity)
    for text in UNRELATED:
        add(text, "", None, "neutral")
    return out


def default_run_config() -> dict:
    days = trading_days(TEST_START, 0, N_TEST)
    return {
        "prices": "prices",
        "headlines": "headlines.jsonl",
        "tickers": list(BUNDLE_TICKERS),
        "start": days[0].isoformat(),
        "end": days[-1].isoformat(),
        "forecaster": "persistence",
        "sentiment": "lexicon",
        "assoc": "rule",
        "seed": 42,
        "smoothing": {"window": 7, "fill": "skip"},
        "strategy": {"w_p": 0.5, "w_n": 0.5, "tau": 0.005, "alpha": 0.1, "mode": "hybrid"},
        "costs": {"initial_capital": 1_000_000.0, "fee_per_share": 0.005, "slippage_frac": 0.0002},
        "attack": {"kind": "hidden_text", "ticker": TARGET_TICKER,
                   "date": days[TARGET_DAY].isoformat(), "payload": "losses and layoffs",
                   "concealment": "display_none"},
    }


def write_bundle(directory) -> Path:
    """Write prices/, headlines.jsonl, corpus.jsonl and run.json under ``directory``."""
    out = Path(directory)
    (out / "prices").mkdir(parents=True, exist_ok=True)
    for ticker, series in make_prices().items():
        write_ohlcv(series, out / "prices" / f"{ticker}.csv")
    make_headlines().dump_jsonl(out / "headlines.jsonl")
    with (out / "corpus.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for item in make_corpus():
            fh.write(json.dumps(item.to_json(), ensure_ascii=False) + "\n")
    (out / "run.json").write_text(json.dumps(default_run_config(), indent=2) + "\n", encoding="utf-8")
    return out


def bundle_dir() -> Path:
    """Location of the shipped bundle inside the installed package."""
    return Path(str(resources.files("advnews").joinpath("data/fixtures")))


def copy_bundle(directory) -> Path:
    dst = Path(directory)
    shutil.copytree(bundle_dir(), dst, dirs_exist_ok=True)
    return dst


def load_corpus(path=None) -> list[LabeledHeadline]:
    p = Path(path) if path else bundle_dir() / "corpus.jsonl"
    with p.open(encoding="utf-8") as fh:
        return [LabeledHeadline.from_json(json.loads(line)) for line in fh if line.strip()]
