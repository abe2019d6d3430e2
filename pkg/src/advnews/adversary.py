"""Headline manipulations and single-day, single-stock attack planning."""

from __future__ import annotations

import datetime as dt
import html
import json
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .homoglyphs import DEFAULT_TABLE, HomoglyphTable
from .market_data import Calendar, Portfolio, parse_date
from .news import Headline, HeadlineStore
from .sanitizer import VOID_TAGS, HtmlParseError, scan

KINDS = ("homoglyph", "hidden_text")
DEFAULT_PAYLOAD = "losses and layoffs"
CONCEALMENT_STYLES = {
    "display_none": "display:none",
    "font_size_zero": "font-size:0pt",
    "color_match": "color:#FFFFFE",
}

_ENTITY_REF = re.compile(r"&(?:#[0-9]+|#[xX][0-9a-fA-F]+|[A-Za-z][A-Za-z0-9]*);?")


def normalize_kind(kind: str) -> str:
    k = kind.replace("-", "_")
    if k not in KINDS:
        raise ValueError(f"unknown attack kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    ticker: str
    date: dt.date

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))

    def validate(self, portfolio: Portfolio, calendar: Calendar | None = None) -> None:
        if self.ticker not in portfolio.tickers:
            raise ValueError(f"ticker {self.ticker} not in portfolio")
        if calendar is not None and self.date not in calendar:
            raise ValueError(f"{self.date} is not a trading day in the calendar")

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "ticker": self.ticker, "date": self.date.isoformat()})

    @classmethod
    def from_json(cls, text: str) -> "AttackSpec":
        obj = json.loads(text)
        return cls(obj["kind"], obj["ticker"], parse_date(obj["date"]))


def _names_pattern(names: Iterable[str]) -> re.Pattern:
    alts = sorted(set(names), key=len, reverse=True)
    return re.compile(r"(?<!\w)(?:" + "|".join(map(re.escape, alts)) + r")(?!\w)", re.I)


def substitute_text(text: str, names: Sequence[str], table: HomoglyphTable = DEFAULT_TABLE) -> str:
    """Replace every occurrence of any of ``names`` with its attacked spelling."""
    pat = _names_pattern(names)
    return pat.sub(lambda m: table.substitute(m.group()), text)


def _rewrite_visible(raw: str, fn: Callable[[str], str]) -> str:
    """Apply ``fn`` to visible text runs only, leaving markup and entity refs intact."""
    segments, _ = scan(raw)
    out = []
    last = 0
    for seg in segments:
        if seg.kind != "text" or seg.hidden:
            continue
        out.append(raw[last:seg.start])
        chunk = raw[seg.start:seg.end]
        pieces = []
        pos = 0
        for m in _ENTITY_REF.finditer(chunk):
            pieces.append(fn(chunk[pos:m.start()]))
            pieces.append(m.group())
            pos = m.end()
        pieces.append(fn(chunk[pos:]))
        out.append("".join(pieces))
        last = seg.end
    out.append(raw[last:])
    return "".join(out)


def substitute_entity(headline: Headline, ticker: str, portfolio: Portfolio,
                      table: HomoglyphTable = DEFAULT_TABLE) -> Headline:
    """Homoglyph-spoof the ticker and its aliases in the visible text.

    Returns the input object itself when no occurrence was found (no-op).
    """
    names = portfolio.aliases[ticker]
    new_raw = _rewrite_visible(headline.raw_html, lambda s: substitute_text(s, names, table))
    if new_raw == headline.raw_html:
        return headline
    return Headline(f"{headline.id}#homoglyph", headline.date, new_raw, headline.source)


def _single_root_close(raw: str) -> int | None:
    """Offset of the closing tag of a sole wrapping element, if there is one."""
    segments, _ = scan(raw)
    tags = [s for s in segments if not (s.kind == "text" and not raw[s.start:s.end].strip())]
    if len(tags) < 2 or tags[0].kind != "tag" or tags[-1].kind != "tag":
        return None
    first = raw[tags[0].start:tags[0].end]
    last = raw[tags[-1].start:tags[-1].end]
    m = re.match(r"<([A-Za-z][\w:-]*)", first)
    if not m or first.endswith("/>") or m.group(1).lower() in VOID_TAGS:
        return None
    name = m.group(1).lower()
    if not re.fullmatch(rf"</{re.escape(name)}\s*>", last, re.I):
        return None
    depth = 0
    for s in tags[:-1]:
        if s.kind != "tag":
            continue
        t = raw[s.start:s.end]
        tm = re.match(r"<(/?)([A-Za-z][\w:-]*)", t)
        if tm.group(2).lower() != name:
            continue
        depth += -1 if tm.group(1) else 1
        if depth == 0:
            return None
    return tags[-1].start


def inject_hidden_text(headline: Headline, payload: str = DEFAULT_PAYLOAD,
                       concealment: str = "display_none") -> Headline:
    if concealment not in CONCEALMENT_STYLES:
        raise ValueError(f"unknown concealment {concealment!r}")
    raw = headline.raw_html
    try:
        at = _single_root_close(raw)
    except HtmlParseError as exc:
        raise HtmlParseError(f"headline {headline.id}: {exc}") from None
    span = f'<span style="{CONCEALMENT_STYLES[concealment]}">{html.escape(payload, quote=False)}</span>'
    new_raw = raw + span if at is None else raw[:at] + span + raw[at:]
    return Headline(f"{headline.id}#hidden_text", headline.date, new_raw, headline.source)


@dataclass(frozen=True)
class SweepPlan:
    targets: tuple[tuple[dt.date, str], ...]
    kinds: tuple[str, ...]

    def __len__(self):
        return len(self.targets) * len(self.kinds)

    def specs(self) -> list[AttackSpec]:
        return [AttackSpec(k, s, t) for k in self.kinds for t, s in self.targets]


def enumerate_targets(store: HeadlineStore, portfolio: Portfolio, calendar: Calendar,
                      clean_assoc: Mapping[str, str | None],
                      kinds: Sequence[str] = KINDS) -> SweepPlan:
    """All (day, stock) pairs on the calendar with at least one clean headline."""
    days = set(calendar.dates)
    pairs = {(h.date, clean_assoc.get(h.id)) for h in store}
    order = {t: i for i, t in enumerate(portfolio.tickers)}
    targets = sorted(((d, s) for d, s in pairs if s in order and d in days),
                     key=lambda p: (p[0], order[p[1]]))
    if not targets:
        raise ValueError("no attackable (day, stock) pairs: every day/stock lacks headlines")
    return SweepPlan(tuple(targets), tuple(normalize_kind(k) for k in kinds))


@dataclass(frozen=True)
class AppliedAttack:
    spec: AttackSpec
    store: HeadlineStore
    touched: tuple[int, ...]   # positions of H_{t*,s*} in the store
    noops: tuple[int, ...]     # subset of touched left unchanged by the transform


def transform_for(spec: AttackSpec, portfolio: Portfolio, table: HomoglyphTable = DEFAULT_TABLE,
                  payload: str = DEFAULT_PAYLOAD, concealment: str = "display_none"
                  ) -> Callable[[Headline], Headline]:
    if spec.kind == "homoglyph":
        return lambda h: substitute_entity(h, spec.ticker, portfolio, table)
    return lambda h: inject_hidden_text(h, payload, concealment)


def apply(spec: AttackSpec, store: HeadlineStore, clean_assoc: Mapping[str, str | None],
          portfolio: Portfolio, table: HomoglyphTable = DEFAULT_TABLE,
          payload: str = DEFAULT_PAYLOAD, concealment: str = "display_none",
          transform: Callable[[Headline], Headline] | None = None) -> AppliedAttack:
    """Manipulate only the headlines cleanly associated with the target on its day."""
    fn = transform or transform_for(spec, portfolio, table, payload, concealment)
    touched, noops, updates = [], [], {}
    for i, h in enumerate(store):
        if h.date != spec.date or clean_assoc.get(h.id) != spec.ticker:
            continue
        touched.append(i)
        new = fn(h)
        if new.raw_html == h.raw_html:
            noops.append(i)
        if new is not h:
            updates[i] = new
    return AppliedAttack(spec, store.replace(updates), tuple(touched), tuple(noops))
