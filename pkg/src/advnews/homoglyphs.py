"""Latin to Cyrillic confusable tables.

Two layers are kept:

* a per-character forward map (Latin letter -> Cyrillic look-alike), whose
  inverse is what the sanitizer uses to undo substitutions;
* per-entity realized forms for the default ten tickers and their company
  names.  The reference attack does not replace every mappable letter of a
  name (``AAPL`` keeps its ``P``, ``Tesla`` keeps ``e`` and ``s``), so these
  forms are data, not something derivable from the character map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

# Latin -> Cyrillic.  G, L and Z are deliberately absent: the first two print
# as the Latin glyph itself and Z collides with Y on U+0423.
DEFAULT_FORWARD: dict[str, str] = {
    "A": "А",
    "B": "В",
    "C": "С",
    "E": "Е",
    "H": "Н",
    "I": "І",
    "J": "Ј",
    "K": "К",
    "M": "М",
    "O": "О",
    "P": "Р",
    "S": "Ѕ",
    "T": "Т",
    "X": "Х",
    "Y": "У",
    "a": "а",
    "c": "с",
    "e": "е",
    "h": "һ",
    "i": "і",
    "j": "ј",
    "m": "м",
    "o": "о",
    "p": "р",
    "s": "ѕ",
    "x": "х",
    "y": "у",
}

_A, _E, _I, _J, _M, _O, _T, _X, _Y = (
    "А", "Е", "І", "Ј", "М", "О", "Т", "Х", "У",
)
_a, _e, _i, _m, _o, _p, _x, _y = (
    "а", "е", "і", "м", "о", "р", "х", "у",
)

# Attacked tickers, letter for letter.
TICKER_FORMS: dict[str, str] = {
    "GOOGL": f"G{_O}{_O}GL",
    "AAPL": f"{_A}{_A}PL",
    "NVDA": f"NVD{_A}",
    "MSFT": f"{_M}SFT",
    "AMZN": f"{_A}{_M}ZN",
    "META": f"{_M}{_E}T{_A}",
    "TSLA": f"{_T}SL{_A}",
    "LLY": f"LL{_Y}",
    "JPM": f"{_J}PM",
    "XOM": f"{_X}{_O}{_M}",
}

# Attacked company names, letter for letter.
COMPANY_FORMS: dict[str, str] = {
    "Google": f"G{_o}{_o}gl{_e}",
    "Alphabet": f"{_A}l{_p}h{_a}b{_e}t",
    "Apple": f"{_A}{_p}{_p}l{_e}",
    "Nvidia": f"Nv{_i}di{_a}",
    "Microsoft": f"{_M}icros{_o}ft",
    "Amazon": f"{_A}{_m}az{_o}n",
    "Meta": f"{_M}{_e}t{_a}",
    "Tesla": f"{_T}esl{_a}",
    "Eli Lilly": f"{_E}li Lill{_y}",
    "JPMorgan Chase": f"{_J}P{_M}organ Chase",
    "Exxon Mobil": f"{_E}x{_x}{_o}n {_M}obil",
}

# Company names per ticker for the default ten-stock portfolio.
DEFAULT_COMPANIES: dict[str, tuple[str, ...]] = {
    "GOOGL": ("Google", "Alphabet"),
    "AAPL": ("Apple",),
    "NVDA": ("Nvidia",),
    "MSFT": ("Microsoft",),
    "AMZN": ("Amazon",),
    "META": ("Meta",),
    "TSLA": ("Tesla",),
    "LLY": ("Eli Lilly",),
    "JPM": ("JPMorgan Chase",),
    "XOM": ("Exxon Mobil",),
}


@dataclass(frozen=True)
class HomoglyphTable:
    """Injective Latin -> confusable map plus optional whole-entity forms.

    ``entity_forms`` maps an exact entity string to its attacked spelling.
    Strings without an entry fall back to replacing every mappable letter.
    """

    forward: Mapping[str, str]
    entity_forms: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        fwd = dict(self.forward)
        problems = []
        for k, v in fwd.items():
            if len(k) != 1 or len(v) != 1:
                problems.append(f"{k!r}->{v!r} is not a single-codepoint pair")
        if len(set(fwd.values())) != len(fwd):
            problems.append("forward map is not injective")
        if set(fwd) & set(fwd.values()):
            problems.append("forward map domain and codomain overlap")
        for plain, attacked in self.entity_forms.items():
            if len(plain) != len(attacked):
                problems.append(f"entity form for {plain!r} changes length")
                continue
            for a, b in zip(plain, attacked):
                if a != b and fwd.get(a) != b:
                    problems.append(f"entity form for {plain!r} uses unmapped pair {a!r}->{b!r}")
        if problems:
            raise ValueError("invalid homoglyph table: " + "; ".join(problems))
        object.__setattr__(self, "forward", MappingProxyType(fwd))
        object.__setattr__(self, "entity_forms", MappingProxyType(dict(self.entity_forms)))
        object.__setattr__(self, "_fwd_trans", str.maketrans(fwd))
        object.__setattr__(self, "_rev_trans", str.maketrans({v: k for k, v in fwd.items()}))
        object.__setattr__(self, "_rev_keys", frozenset(fwd.values()))

    @property
    def reverse(self) -> dict[str, str]:
        return {v: k for k, v in self.forward.items()}

    def substitute(self, text: str) -> str:
        """Attacked spelling of ``text`` (entity form if known, else full map)."""
        form = self.entity_forms.get(text)
        if form is not None:
            return form
        return text.translate(self._fwd_trans)

    def full_substitute(self, text: str) -> str:
        return text.translate(self._fwd_trans)

    def normalize(self, text: str) -> tuple[str, int]:
        count = sum(1 for ch in text if ch in self._rev_keys)
        if not count:
            return text, 0
        return text.translate(self._rev_trans), count


# Opt-in rows for G, L and Z, using standard confusables from outside the
# Cyrillic Latin-lookalike block.  Entity forms are unchanged by them.
EXTENDED_ROWS: dict[str, str] = {
    "G": "\u050c",  # CYRILLIC CAPITAL LETTER KOMI SJE
    "L": "\u13de",  # CHEROKEE LETTER TLE
    "Z": "\u0396",  # GREEK CAPITAL LETTER ZETA
}
TABLE_ROWS = ("default", "extended")


def default_table() -> HomoglyphTable:
    return HomoglyphTable(DEFAULT_FORWARD, {**TICKER_FORMS, **COMPANY_FORMS})


def extended_table() -> HomoglyphTable:
    return HomoglyphTable({**DEFAULT_FORWARD, **EXTENDED_ROWS}, {**TICKER_FORMS, **COMPANY_FORMS})


DEFAULT_TABLE = default_table()


def table_for(rows: str = "default") -> HomoglyphTable:
    if rows == "default":
        return DEFAULT_TABLE
    if rows == "extended":
        return extended_table()
    raise ValueError(f"unknown homoglyph rows {rows!r}; expected one of {TABLE_ROWS}")
