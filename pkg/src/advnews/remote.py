"""Prompted remote-model backends for association and sentiment.

Prompts are zero-shot with a fixed output schema; decoding is deterministic
(temperature 0, top-p 1).  Replies are parsed line by line and a bad line
only fails its own item.
"""

from __future__ import annotations

import logging
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Sequence

from .market_data import Portfolio
from .news import Association, SentimentScore

log = logging.getLogger(__name__)

ASSOC_SYSTEM = (
    "You are a financial analyst who uses NLP techniques (NER, semantic matching) "
    "to detect which company a news headline refers to."
)

ASSOC_USER = """I will give you a numbered list of headlines.

Your job:
- For each headline, determine which stock from [{tickers}] it refers to.
- Base your decision on company names, related terms, or clear semantic references.
- If no confident match exists, return "unrecognized".

Input format:
Headlines:
1. <headline text here>
2. <headline text here>
3. <headline text here>
...

Output format (one line per headline, same order):
<id>,<pred_ticker>

Where:
- <id> is the input headline number (1,2,3,...).
- <pred_ticker> is one of the listed tickers or "unrecognized".

Return only the lines in the specified format. No extra text, explanations, or JSON.

Headlines:
{headlines}"""

SENT_SYSTEM = "You are a financial-news sentiment classifier."

SENT_USER = """Input: a numbered list of headlines that all refer to the same known stock ticker.
Notes:
- The text may contain HTML markup.
- Keep output strictly in the specified format.

Ticker: {ticker}

Headlines:
{headlines}

Output format (one line per headline, same order):
<id>,<sent>,<conf>

Where:
- <id> is the input headline number (1,2,3,...).
- <sent> is +1 for positive, 0 for neutral, -1 for negative.
- <conf> is a confidence score as a float between 0 and 1.

Return only the lines in the specified format. No extra text, explanations, or JSON."""


class RemoteError(RuntimeError):
    retryable = False


class RemoteTransportError(RemoteError):
    retryable = True


@dataclass(frozen=True)
class ItemError:
    """Per-headline parse failure; ``raw`` keeps the offending line for audit."""

    item: int
    reason: str
    raw: str | None = None

    def __str__(self):
        return f"item {self.item}: {self.reason}" + (f" (line {self.raw!r})" if self.raw else "")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 2048
    token_env: str = "ADVNEWS_API_KEY"
    timeout: float = 60.0
    batch_size: int = 20

    @classmethod
    def from_dict(cls, obj: dict) -> "EndpointConfig":
        known = {k: obj[k] for k in cls.__dataclass_fields__ if k in obj}
        return cls(**known)


def numbered(texts: Sequence[str]) -> str:
    return "\n".join(f"{i}. {' '.join(t.split())}" for i, t in enumerate(texts, start=1))


def render_assoc_prompt(texts: Sequence[str], tickers: Sequence[str]) -> list[dict]:
    user = ASSOC_USER.format(tickers=", ".join(tickers), headlines=numbered(texts))
    return [{"role": "system", "content": ASSOC_SYSTEM}, {"role": "user", "content": user}]


def render_sentiment_prompt(texts: Sequence[str], ticker: str) -> list[dict]:
    user = SENT_USER.format(ticker=ticker, headlines=numbered(texts))
    return [{"role": "system", "content": SENT_SYSTEM}, {"role": "user", "content": user}]


_ASSOC_LINE = re.compile(r"^\s*(\d+)\s*,\s*([A-Za-z.\-]+)\s*$")
_SENT_LINE = re.compile(r"^\s*(\d+)\s*,\s*([+-]?[01])\s*,\s*([0-9]*\.?[0-9]+(?:[eE][+-]?\d+)?)\s*$")


def _lines(response: str) -> list[str]:
    return [ln for ln in response.splitlines() if ln.strip()]


def parse_assoc_response(response: str, n: int, tickers: Sequence[str]
                         ) -> tuple[dict[int, str | None], list[ItemError]]:
    """Map item number -> ticker (None for "unrecognized")."""
    known = {t.upper(): t for t in tickers}
    items: dict[int, str | None] = {}
    errors: list[ItemError] = []
    for line in _lines(response):
        m = _ASSOC_LINE.match(line)
        if not m:
            errors.append(ItemError(0, "unparseable line", line))
            continue
        idx, pred = int(m.group(1)), m.group(2)
        if not 1 <= idx <= n:
            errors.append(ItemError(idx, "id out of range", line))
        elif idx in items:
            errors.append(ItemError(idx, "duplicate id", line))
        elif pred.lower() == "unrecognized":
            items[idx] = None
        elif pred.upper() in known:
            items[idx] = known[pred.upper()]
        else:
            errors.append(ItemError(idx, f"ticker {pred!r} not in portfolio", line))
    return items, errors


def render_assoc_response(items: dict[int, str | None]) -> str:
    return "\n".join(f"{i},{items[i] if items[i] is not None else 'unrecognized'}"
                     for i in sorted(items))


def parse_sentiment_response(response: str, n: int
                             ) -> tuple[dict[int, tuple[int, float]], list[ItemError]]:
    items: dict[int, tuple[int, float]] = {}
    errors: list[ItemError] = []
    for line in _lines(response):
        m = _SENT_LINE.match(line)
        if not m:
            errors.append(ItemError(0, "unparseable line", line))
            continue
        idx, sent, conf = int(m.group(1)), int(m.group(2)), float(m.group(3))
        if not 1 <= idx <= n:
            errors.append(ItemError(idx, "id out of range", line))
        elif idx in items:
            errors.append(ItemError(idx, "duplicate id", line))
        elif m.group(2) in ("+0", "-0"):
            errors.append(ItemError(idx, "signed zero label", line))
        elif not 0.0 <= conf <= 1.0:
            errors.append(ItemError(idx, "confidence outside [0, 1]", line))
        else:
            items[idx] = (sent, conf)
    return items, errors


def render_sentiment_response(items: dict[int, tuple[int, float]]) -> str:
    def label(s):
        return "+1" if s > 0 else ("-1" if s < 0 else "0")
    return "\n".join(f"{i},{label(items[i][0])},{items[i][1]!r}" for i in sorted(items))


@dataclass
class RemoteClient:
    """Chat-completions client; ``session`` only needs a requests-style ``post``."""

    config: EndpointConfig = field(default_factory=EndpointConfig)
    session: object = None
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if self.session is None:
            import requests
            self.session = requests.Session()

    def complete(self, messages: list[dict]) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(cfg.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": cfg.model,
            "messages": messages,
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_tokens,
        }
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        with self._lock:  # one in-flight batch per endpoint
            try:
                resp = self.session.post(url, json=payload, headers=headers, timeout=cfg.timeout)
            except Exception as exc:  # connection refused, timeout, DNS...
                raise RemoteTransportError(f"{url}: {exc}") from exc
        status = getattr(resp, "status_code", 200)
        if status == 429 or status >= 500:
            raise RemoteTransportError(f"{url}: HTTP {status}")
        if status >= 400:
            raise RemoteError(f"{url}: HTTP {status}: {getattr(resp, 'text', '')[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise RemoteError(f"{url}: unexpected response body ({exc})") from exc

    def _batches(self, texts):
        size = max(1, self.config.batch_size)
        for i in range(0, len(texts), size):
            yield texts[i: i + size]

    def associate(self, texts: Sequence[str], portfolio: Portfolio) -> list[Association]:
        out: list[Association] = []
        for batch in self._batches(list(texts)):
            reply = self.complete(render_assoc_prompt(batch, portfolio.tickers))
            items, errors = parse_assoc_response(reply, len(batch), portfolio.tickers)
            for e in errors:
                log.warning("association parse failure: %s", e)
            by_item = {e.item: e for e in errors}
            for k in range(1, len(batch) + 1):
                hid = str(len(out) + 1)
                if k in items:
                    out.append(Association(hid, items[k], "remote"))
                else:
                    err = by_item.get(k, ItemError(k, "missing from reply"))
                    out.append(Association(hid, None, "remote", error=str(err)))
        return out

    def score(self, texts: Sequence[str], ticker: str) -> list[SentimentScore | ItemError]:
        out: list[SentimentScore | ItemError] = []
        for batch in self._batches(list(texts)):
            reply = self.complete(render_sentiment_prompt(batch, ticker))
            items, errors = parse_sentiment_response(reply, len(batch))
            for e in errors:
                log.warning("sentiment parse failure: %s", e)
            by_item = {e.item: e for e in errors}
            for k in range(1, len(batch) + 1):
                if k in items:
                    sent, conf = items[k]
                    out.append(SentimentScore(str(len(out) + 1), float(sent), conf, "remote"))
                else:
                    out.append(by_item.get(k, ItemError(k, "missing from reply")))
        return out


def remote_associate(headlines, portfolio: Portfolio, config: EndpointConfig,
                     session=None) -> list[Association]:
    client = RemoteClient(config, session)
    res = client.associate([h.raw_html for h in headlines], portfolio)
    return [Association(h.id, a.ticker, a.backend, a.ambiguous, a.error)
            for h, a in zip(headlines, res)]


def remote_score(headlines, ticker: str, config: EndpointConfig,
                 session=None) -> list[SentimentScore | ItemError]:
    client = RemoteClient(config, session)
    res = client.score([h.raw_html for h in headlines], ticker)
    return [SentimentScore(h.id, r.polarity, r.confidence, r.backend)
            if isinstance(r, SentimentScore) else r for h, r in zip(headlines, res)]
