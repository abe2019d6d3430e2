"""Daily OHLCV loading, validation and calendar alignment."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .homoglyphs import DEFAULT_COMPANIES

HEADER = ["date", "open", "high", "low", "close", "volume"]


class DataError(ValueError):
    pass


class ParseError(DataError):
    pass


class ValidationError(DataError):
    pass


@dataclass(frozen=True)
class Bar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: float

    def problems(self) -> list[str]:
        out = []
        for name in ("open", "high", "low", "close"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                out.append(f"{name} must be a positive finite price, got {v}")
        if not math.isfinite(self.volume) or self.volume < 0:
            out.append(f"volume must be non-negative, got {self.volume}")
        if self.low > min(self.open, self.close):
            out.append("low above min(open, close)")
        if self.high < max(self.open, self.close):
            out.append("high below max(open, close)")
        if self.low > self.high:
            out.append("low above high")
        return out


@dataclass(frozen=True)
class BarSeries:
    ticker: str
    bars: tuple[Bar, ...]

    def __post_init__(self):
        if not self.bars:
            raise ValidationError(f"{self.ticker}: series is empty")
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date == prev.date:
                raise ValidationError(f"{self.ticker}: duplicate date {cur.date}")
            if cur.date < prev.date:
                raise ValidationError(f"{self.ticker}: dates not increasing at {cur.date}")
        object.__setattr__(self, "_index", {b.date: i for i, b in enumerate(self.bars)})

    def __len__(self):
        return len(self.bars)

    @property
    def dates(self) -> list[dt.date]:
        return [b.date for b in self.bars]

    def index_of(self, day: dt.date) -> int:
        try:
            return self._index[day]
        except KeyError:
            raise KeyError(f"{self.ticker}: no bar on {day}") from None

    def bar(self, day: dt.date) -> Bar:
        return self.bars[self.index_of(day)]

    def matrix(self) -> np.ndarray:
        """(n, 5) float array of open, high, low, close, volume."""
        return np.array([(b.open, b.high, b.low, b.close, b.volume) for b in self.bars], dtype=float)

    def closes(self) -> np.ndarray:
        return np.array([b.close for b in self.bars], dtype=float)

    def upto(self, day: dt.date) -> "BarSeries":
        return BarSeries(self.ticker, tuple(b for b in self.bars if b.date <= day))


def parse_date(value: str) -> dt.date:
    return dt.date.fromisoformat(value.strip())


def load_ohlcv(path, ticker: str) -> BarSeries:
    path = Path(path)
    bars: list[Bar] = []
    seen: set[dt.date] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise ParseError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                day = parse_date(row[0])
                o, h, l, c, v = (float(x) for x in row[1:])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            bar = Bar(day, o, h, l, c, v)
            problems = bar.problems()
            if problems:
                raise ValidationError(f"{ticker} {day}: " + "; ".join(problems))
            if day in seen:
                raise ValidationError(f"{ticker}: duplicate date {day}")
            seen.add(day)
            bars.append(bar)
    bars.sort(key=lambda b: b.date)
    return BarSeries(ticker, tuple(bars))


def write_ohlcv(series: BarSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for b in series.bars:
            w.writerow([b.date.isoformat(), repr(b.open), repr(b.high), repr(b.low),
                        repr(b.close), repr(b.volume)])


def load_prices_dir(directory, tickers: Iterable[str] | None = None) -> dict[str, BarSeries]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"prices directory not found: {directory}")
    if tickers is None:
        tickers = sorted(p.stem for p in directory.glob("*.csv"))
    out = {}
    for t in tickers:
        p = directory / f"{t}.csv"
        if not p.exists():
            raise DataError(f"missing price file for {t}: {p}")
        out[t] = load_ohlcv(p, t)
    if not out:
        raise DataError(f"no price files in {directory}")
    return out


@dataclass(frozen=True)
class Portfolio:
    tickers: tuple[str, ...]
    aliases: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.tickers)) != len(self.tickers):
            raise ValidationError("portfolio tickers must be unique")
        full = {}
        for t in self.tickers:
            names = [t, *self.aliases.get(t, ())]
            full[t] = tuple(dict.fromkeys(names))
        object.__setattr__(self, "aliases", full)

    @classmethod
    def default(cls, tickers: Sequence[str] | None = None) -> "Portfolio":
        tickers = tuple(tickers or DEFAULT_COMPANIES)
        return cls(tickers, {t: DEFAULT_COMPANIES.get(t, ()) for t in tickers})


@dataclass(frozen=True)
class Calendar:
    dates: tuple[dt.date, ...]

    def __len__(self):
        return len(self.dates)

    def __contains__(self, day):
        return day in self.dates

    def index(self, day: dt.date) -> int:
        return self.dates.index(day)


def build_calendar(series_set: Sequence[BarSeries], start: dt.date | None = None,
                   end: dt.date | None = None) -> Calendar:
    if not series_set:
        raise DataError("build_calendar needs at least one series")
    common = set(series_set[0].dates)
    for s in series_set[1:]:
        common &= set(s.dates)
    days = sorted(d for d in common
                  if (start is None or d >= start) and (end is None or d <= end))
    if not days:
        raise DataError("calendar is empty: no common trading days in range")
    return Calendar(tuple(days))


def aligned_arrays(series: dict[str, BarSeries], tickers: Sequence[str],
                   calendar: Calendar) -> tuple[np.ndarray, np.ndarray]:
    """Opens and closes as (T, S) arrays on the calendar."""
    T, S = len(calendar), len(tickers)
    opens = np.empty((T, S))
    closes = np.empty((T, S))
    for j, t in enumerate(tickers):
        ser = series[t]
        for i, day in enumerate(calendar.dates):
            b = ser.bar(day)
            opens[i, j] = b.open
            closes[i, j] = b.close
    return opens, closes
