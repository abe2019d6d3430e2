"""Visible-text extraction and homoglyph normalization for headline HTML.

The scanner below is intentionally small: it splits a fragment into tag,
comment and text segments, tracks an element stack, and marks text that sits
under an inline-concealed element (``display:none`` or a zero font size).
Both the defense and the attack generator work from the same segmentation,
so "visible" means the same thing on both sides.
"""

from __future__ import annotations

import html
import re
import time
from dataclasses import dataclass

from .homoglyphs import DEFAULT_TABLE, HomoglyphTable


class HtmlParseError(ValueError):
    """Markup that cannot be recovered (e.g. an unterminated tag)."""


VOID_TAGS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)
RAWTEXT_TAGS = frozenset(("script", "style"))

_TAG_RE = re.compile(
    r"""<(/?)([A-Za-z][A-Za-z0-9:_-]*)"""
    r"""((?:\s+[^\s=/>"']+(?:\s*=\s*(?:"[^"]*"|'[^']*'|[^\s>"']+))?)*)"""
    r"""\s*(/?)>""",
    re.S,
)
_ATTR_RE = re.compile(
    r"""([^\s=/>"']+)(?:\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>"']+)))?""", re.S
)
_NUM_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)")
_NEAR_WHITE_RE = re.compile(r"#f{5}[0-9a-f]$")


@dataclass(frozen=True)
class Segment:
    kind: str  # "text" | "tag" | "comment" | "raw"
    start: int
    end: int
    hidden: bool = False


def _style_conceals(style: str, color_match: bool = False) -> bool:
    style = re.sub(r"\s+", "", style).lower()
    for decl in style.split(";"):
        prop, sep, value = decl.partition(":")
        if not sep:
            continue
        value = value.replace("!important", "")
        if prop == "display" and value == "none":
            return True
        if prop == "font-size":
            m = _NUM_RE.match(value)
            unit = value[m.end():] if m else None
            if m and float(m.group()) == 0.0 and (unit == "" or unit == "%" or unit.isalpha()):
                return True
        if color_match and prop == "color" and _NEAR_WHITE_RE.match(value):
            return True
    return False


def _attrs(attr_src: str) -> dict[str, str]:
    out = {}
    for m in _ATTR_RE.finditer(attr_src):
        name = m.group(1).lower()
        value = next((g for g in m.group(2, 3, 4) if g is not None), "")
        out.setdefault(name, html.unescape(value))
    return out


def scan(raw: str, color_match: bool = False) -> tuple[list[Segment], int]:
    """Segment ``raw`` and return (segments, number of concealing elements)."""
    segments: list[Segment] = []
    stack: list[tuple[str, bool]] = []  # (tag, concealed-at-or-above)
    hidden_count = 0
    pos = 0
    text_start = 0
    n = len(raw)

    def flush(upto):
        if upto > text_start:
            hidden = bool(stack) and stack[-1][1]
            segments.append(Segment("text", text_start, upto, hidden))

    while True:
        lt = raw.find("<", pos)
        if lt < 0:
            break
        nxt = raw[lt + 1: lt + 2]
        if raw.startswith("<!--", lt):
            close = raw.find("-->", lt + 4)
            if close < 0:
                raise HtmlParseError(f"unterminated comment at offset {lt}")
            flush(lt)
            segments.append(Segment("comment", lt, close + 3))
            pos = text_start = close + 3
            continue
        if nxt == "!" or nxt == "?":
            close = raw.find(">", lt)
            if close < 0:
                raise HtmlParseError(f"unterminated declaration at offset {lt}")
            flush(lt)
            segments.append(Segment("comment", lt, close + 1))
            pos = text_start = close + 1
            continue
        if not (nxt.isalpha() or (nxt == "/" and raw[lt + 2: lt + 3].isalpha())):
            # a bare "<" in running text
            pos = lt + 1
            continue
        m = _TAG_RE.match(raw, lt)
        if m is None:
            raise HtmlParseError(f"unterminated or malformed tag at offset {lt}")
        flush(lt)
        segments.append(Segment("tag", lt, m.end()))
        pos = text_start = m.end()
        closing, name, attr_src, selfclose = m.groups()
        name = name.lower()
        if closing:
            for i in range(len(stack) - 1, -1, -1):
                if stack[i][0] == name:
                    del stack[i:]
                    break
            continue
        if name in VOID_TAGS or selfclose:
            continue
        parent_hidden = bool(stack) and stack[-1][1]
        style = _attrs(attr_src).get("style", "")
        conceals = bool(style) and _style_conceals(style, color_match)
        hidden_count += conceals
        if name in RAWTEXT_TAGS:
            end_m = re.compile(rf"</{name}\s*>", re.I).search(raw, pos)
            stop = end_m.start() if end_m else n
            if stop > pos:
                segments.append(Segment("raw", pos, stop, True))
            if end_m:
                segments.append(Segment("tag", end_m.start(), end_m.end()))
                pos = text_start = end_m.end()
            else:
                pos = text_start = n
            continue
        stack.append((name, parent_hidden or conceals))
    flush(n)
    return segments, hidden_count


def extract_visible_text(raw_html: str, color_match: bool = False) -> tuple[str, int]:
    """Text a reader would see, plus the number of concealing elements removed.

    >>> extract_visible_text('Alphabet beats<span style="display:none">losses</span>')
    ('Alphabet beats', 1)
    """
    segments, hidden = scan(raw_html, color_match)
    text = "".join(
        html.unescape(raw_html[s.start: s.end])
        for s in segments
        if s.kind == "text" and not s.hidden
    )
    return text, hidden


def all_text(raw_html: str) -> str:
    """Every text node, concealed or not, the way a naive DOM parser returns it.

    Nodes are joined with single spaces and whitespace is collapsed.  This is
    what an unsanitized model ingests.
    """
    segments, _ = scan(raw_html)
    parts = [html.unescape(raw_html[s.start: s.end]) for s in segments if s.kind == "text"]
    return " ".join(" ".join(parts).split())


def normalize_homoglyphs(text: str, table: HomoglyphTable = DEFAULT_TABLE) -> tuple[str, int]:
    return table.normalize(text)


@dataclass(frozen=True)
class DetectionReport:
    hidden_elements_removed: int
    homoglyphs_normalized: int
    elapsed: float  # seconds

    @property
    def suspicious(self) -> bool:
        return self.hidden_elements_removed > 0 or self.homoglyphs_normalized > 0

    def to_dict(self) -> dict:
        return {
            "hidden_elements_removed": self.hidden_elements_removed,
            "homoglyphs_normalized": self.homoglyphs_normalized,
            "suspicious": self.suspicious,
            "elapsed": self.elapsed,
        }


def sanitize_text(raw_html: str, table: HomoglyphTable = DEFAULT_TABLE,
                  color_match: bool = False) -> tuple[str, DetectionReport]:
    t0 = time.perf_counter()
    visible, hidden = extract_visible_text(raw_html, color_match)
    clean, replaced = table.normalize(visible)
    return clean, DetectionReport(hidden, replaced, time.perf_counter() - t0)


def sanitize(headline, table: HomoglyphTable = DEFAULT_TABLE,
             color_match: bool = False) -> tuple[str, DetectionReport]:
    """Sanitize a headline: strip concealed markup, then undo homoglyphs."""
    return sanitize_text(headline.raw_html, table, color_match)
