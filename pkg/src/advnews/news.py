"""Headline storage, ticker association, sentiment scoring and aggregation."""

from __future__ import annotations

import datetime as dt
import json
import math
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .homoglyphs import DEFAULT_TABLE, HomoglyphTable
from .market_data import Calendar, Portfolio, parse_date
from .sanitizer import all_text, extract_visible_text, sanitize_text

UNRECOGNIZED = None


@dataclass(frozen=True)
class Headline:
    id: str
    date: dt.date
    raw_html: str
    source: str = ""

    def __post_init__(self):
        if not self.raw_html:
            raise ValueError(f"headline {self.id!r} has empty raw_html")

    def to_json(self) -> dict:
        return {"id": self.id, "date": self.date.isoformat(),
                "raw_html": self.raw_html, "source": self.source}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Headline":
        return cls(str(obj["id"]), parse_date(obj["date"]), obj["raw_html"], obj.get("source", ""))


class HeadlineStore(Sequence[Headline]):
    """Immutable, ordered collection of headlines with unique ids."""

    def __init__(self, headlines: Iterable[Headline]):
        self._items = tuple(headlines)
        self._by_id = {}
        for i, h in enumerate(self._items):
            if h.id in self._by_id:
                raise ValueError(f"duplicate headline id {h.id!r}")
            self._by_id[h.id] = i

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)

    def __eq__(self, other):
        return isinstance(other, HeadlineStore) and self._items == other._items

    def __hash__(self):
        return hash(self._items)

    def get(self, headline_id: str) -> Headline:
        return self._items[self._by_id[headline_id]]

    def replace(self, updates: Mapping[int, Headline]) -> "HeadlineStore":
        """New store with the headlines at the given positions swapped out."""
        if not updates:
            return self
        items = list(self._items)
        for i, h in updates.items():
            items[i] = h
        return HeadlineStore(items)

    @classmethod
    def load_jsonl(cls, path) -> "HeadlineStore":
        items = []
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    items.append(Headline.from_json(json.loads(line)))
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad headline record: {exc}") from None
        return cls(items)

    def dump_jsonl(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            for h in self._items:
                fh.write(json.dumps(h.to_json(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class Association:
    headline_id: str
    ticker: str | None
    backend: str = "rule"
    ambiguous: bool = False
    error: str | None = None

    @property
    def recognized(self) -> bool:
        return self.ticker is not None


@dataclass(frozen=True)
class SentimentScore:
    headline_id: str
    polarity: float
    confidence: float
    backend: str = "lexicon"

    def __post_init__(self):
        if not -1.0 <= self.polarity <= 1.0:
            raise ValueError(f"polarity out of range: {self.polarity}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")


def _alias_pattern(alias: str) -> re.Pattern:
    return re.compile(r"(?<!\w)" + re.escape(alias.casefold()) + r"(?!\w)")


class AliasMatcher:
    """Case-folded, token-bounded alias scanner for one portfolio."""

    def __init__(self, portfolio: Portfolio):
        self.portfolio = portfolio
        entries = []
        for order, t in enumerate(portfolio.tickers):
            for alias in portfolio.aliases[t]:
                entries.append((alias, t, order, _alias_pattern(alias)))
        self._entries = entries

    def matches(self, text: str) -> list[tuple[str, str]]:
        folded = text.casefold()
        return [(alias, t) for alias, t, _, pat in self._entries if pat.search(folded)]

    def best(self, text: str) -> tuple[str | None, bool]:
        folded = text.casefold()
        hits = [(len(alias), -order, t) for alias, t, order, pat in self._entries
                if pat.search(folded)]
        if not hits:
            return None, False
        ambiguous = len({h[2] for h in hits}) > 1
        return max(hits)[2], ambiguous


def associate_rule(headline: Headline, portfolio: Portfolio,
                   matcher: AliasMatcher | None = None) -> Association:
    matcher = matcher or AliasMatcher(portfolio)
    visible, _ = extract_visible_text(headline.raw_html)
    ticker, ambiguous = matcher.best(visible)
    return Association(headline.id, ticker, "rule", ambiguous)


@dataclass(frozen=True)
class Lexicon:
    terms: Mapping[str, float]
    version: str = "1"

    @classmethod
    def load(cls, path=None) -> "Lexicon":
        if path is None:
            raw = resources.files("advnews").joinpath("data/lexicon.json").read_text(encoding="utf-8")
        else:
            raw = Path(path).read_text(encoding="utf-8")
        obj = json.loads(raw)
        terms = {k.casefold(): float(v) for k, v in obj["terms"].items()}
        return cls(terms, str(obj.get("version", "1")))


_WORD_RE = re.compile(r"[^\W\d_]+(?:'[^\W\d_]+)?")


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.casefold())


def score_sentiment_lexicon(text: str, lexicon: Lexicon, headline_id: str = "") -> SentimentScore:
    tokens = tokenize(text)
    weights = [lexicon.terms[t] for t in tokens if t in lexicon.terms]
    if not weights:
        return SentimentScore(headline_id, 0.0, 0.0, "lexicon")
    polarity = max(-1.0, min(1.0, sum(weights) / max(1, len(weights))))
    return SentimentScore(headline_id, polarity, len(weights) / len(tokens), "lexicon")


@dataclass(frozen=True)
class HeadlineSignal:
    """Association and score of one headline, as consumed by aggregation."""

    headline_id: str
    date: dt.date
    ticker: str | None
    polarity: float | None
    confidence: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class DailySentiment:
    ticker: str
    date: dt.date
    count: int
    mean: float | None
    smoothed: float | None = None


def daily_mean(items: Sequence[HeadlineSignal], ticker: str | None = None,
               day: dt.date | None = None) -> DailySentiment:
    keys = {(i.ticker, i.date) for i in items}
    if len(keys) > 1:
        raise ValueError(f"daily_mean got mixed (ticker, day) groups: {sorted(keys, key=str)}")
    if keys:
        ticker, day = next(iter(keys))
    if not items:
        return DailySentiment(ticker, day, 0, None)
    total = 0.0
    for i in items:
        total += i.polarity
    return DailySentiment(ticker, day, len(items), total / len(items))


def smooth(daily: Mapping[dt.date, float], t: dt.date, window: int = 7,
           fill: str = "skip") -> float:
    """Trailing calendar-day average ending at ``t``.

    ``daily`` holds means only for days that had news.  With ``fill="skip"``
    the average runs over those days only; ``fill="zero"`` counts quiet days
    as 0 and divides by ``window``.  No news at all gives 0.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    vals = []
    for k in range(window):
        v = daily.get(t - dt.timedelta(days=k))
        if v is not None:
            vals.append(v)
    if not vals:
        return 0.0
    total = 0.0
    for v in vals:
        total += v
    if fill == "zero":
        return total / window
    if fill != "skip":
        raise ValueError(f"unknown fill mode {fill!r}")
    return total / len(vals)


def daily_tables(signals: Iterable[HeadlineSignal], tickers: Sequence[str]
                 ) -> dict[str, dict[dt.date, DailySentiment]]:
    groups: dict[tuple[str, dt.date], list[HeadlineSignal]] = {}
    for sig in signals:
        if sig.ticker is None or sig.polarity is None or sig.ticker not in tickers:
            continue
        groups.setdefault((sig.ticker, sig.date), []).append(sig)
    out: dict[str, dict[dt.date, DailySentiment]] = {t: {} for t in tickers}
    for (t, d), items in groups.items():
        out[t][d] = daily_mean(items)
    return out


def sentiment_matrix(signals: Iterable[HeadlineSignal], tickers: Sequence[str],
                     calendar: Calendar, window: int = 7, fill: str = "skip"
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed sentiment and same-day headline counts as (T, S) arrays."""
    tables = daily_tables(signals, tickers)
    T, S = len(calendar), len(tickers)
    sbar = np.zeros((T, S))
    counts = np.zeros((T, S), dtype=np.int64)
    for j, t in enumerate(tickers):
        means = {d: ds.mean for d, ds in tables[t].items()}
        for i, day in enumerate(calendar.dates):
            sbar[i, j] = smooth(means, day, window, fill)
            ds = tables[t].get(day)
            counts[i, j] = ds.count if ds else 0
    return sbar, counts


@dataclass
class NewsAnalyzer:
    """Runs association and scoring over headlines with the chosen backends.

    Results are memoized on the raw HTML, so repeated runs over mostly
    identical stores (the paired sweep) only pay for the changed headlines.
    """

    portfolio: Portfolio
    lexicon: Lexicon | None = None
    assoc: str = "rule"
    sentiment: str = "lexicon"
    sanitize: bool = False
    table: HomoglyphTable = DEFAULT_TABLE
    color_match: bool = False
    remote: object = None  # RemoteClient, required for remote backends
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _model_cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.assoc not in ("rule", "remote") or self.sentiment not in ("lexicon", "remote"):
            raise ValueError(f"unknown backend assoc={self.assoc!r} sentiment={self.sentiment!r}")
        if "remote" in (self.assoc, self.sentiment) and self.remote is None:
            raise ValueError("remote backend selected but no remote client configured")
        if self.sentiment == "lexicon" and self.lexicon is None:
            self.lexicon = Lexicon.load()
        self._matcher = AliasMatcher(self.portfolio)

    def texts(self, raw_html: str) -> tuple[str, str]:
        """(association input, scoring input) for one headline."""
        if self.sanitize:
            clean, _ = sanitize_text(raw_html, self.table, self.color_match)
            return clean, clean
        visible, _ = extract_visible_text(raw_html)
        scoring = raw_html if self.sentiment == "remote" else all_text(raw_html)
        assoc_in = raw_html if self.assoc == "remote" else visible
        return assoc_in, scoring

    def analyze(self, headlines: Sequence[Headline]) -> list[HeadlineSignal]:
        todo = []
        for h in headlines:
            if h.raw_html not in self._cache:
                todo.append(h)
        if todo:
            fresh = self._compute(todo)
            with self._lock:
                for h, res in zip(todo, fresh):
                    self._cache.setdefault(h.raw_html, res)
        out = []
        for h in headlines:
            ticker, pol, conf, err = self._cache[h.raw_html]
            out.append(HeadlineSignal(h.id, h.date, ticker, pol, conf, err))
        return out

    def _compute(self, headlines: Sequence[Headline]):
        texts = [self.texts(h.raw_html) for h in headlines]
        if self.assoc == "rule":
            tickers = [self._matcher.best(a)[0] for a, _ in texts]
            assoc_err = [None] * len(headlines)
        else:
            assocs = self.remote.associate([a for a, _ in texts], self.portfolio)
            tickers = [a.ticker for a in assocs]
            assoc_err = [a.error for a in assocs]
        results = [(t, None, None, e) for t, e in zip(tickers, assoc_err)]
        if self.sentiment == "lexicon":
            for k, (t, (_, s_in)) in enumerate(zip(tickers, texts)):
                if t is None:
                    continue
                sc = score_sentiment_lexicon(s_in, self.lexicon)
                results[k] = (t, sc.polarity, sc.confidence, assoc_err[k])
        else:
            by_ticker: dict[str, list[int]] = {}
            for k, t in enumerate(tickers):
                if t is not None:
                    by_ticker.setdefault(t, []).append(k)
            for t, idx in by_ticker.items():
                scores = self.remote.score([texts[k][1] for k in idx], t)
                for k, sc in zip(idx, scores):
                    if isinstance(sc, SentimentScore):
                        results[k] = (t, sc.polarity, sc.confidence, assoc_err[k])
                    else:
                        results[k] = (t, None, None, str(sc))
        return results

    def model_scores(self, headlines: Sequence[Headline], ticker: str) -> list[float | None]:
        """Polarity of each headline toward ``ticker``, bypassing association.

        Used to measure what the scorer itself does with an altered text,
        whether or not the headline would still be routed to ``ticker``.
        """
        keys = [(h.raw_html, ticker) for h in headlines]
        todo = [k for k in dict.fromkeys(keys) if k not in self._model_cache]
        if todo:
            scoring = [self.texts(raw)[1] for raw, _ in todo]
            if self.sentiment == "lexicon":
                fresh = [score_sentiment_lexicon(s, self.lexicon).polarity for s in scoring]
            else:
                fresh = [sc.polarity if isinstance(sc, SentimentScore) else None
                         for sc in self.remote.score(scoring, ticker)]
            with self._lock:
                for k, v in zip(todo, fresh):
                    self._model_cache.setdefault(k, v)
        return [self._model_cache[k] for k in keys]
