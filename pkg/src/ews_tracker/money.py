"""Money-string normalization for model replies and gold annotation cells.

Grammar: an optional currency marker ($, US$, USD, EUR, CHF), digits with
optional thousands separators and a decimal point, and an optional magnitude
word (thousand/k, million/m/mn, billion/bn, any case). The marker may sit
before or after the number. Amounts come back in whole currency units;
a bare "$" or no marker at all means USD.
"""

from __future__ import annotations

import re
from decimal import Decimal

from .errors import AmbiguousMagnitude, Unparseable

_NUMBER_RE = re.compile(r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?")
_CURRENCY_RE = re.compile(r"US\$|USD|EUR|CHF|\$", re.IGNORECASE)
_MAGNITUDE_RE = re.compile(r"\b(thousand|million|billion|mn|bn|k|m)\b", re.IGNORECASE)

_MAGNITUDE_FACTOR = {
    "thousand": 1_000, "k": 1_000,
    "million": 1_000_000, "m": 1_000_000, "mn": 1_000_000,
    "billion": 1_000_000_000, "bn": 1_000_000_000,
}


def _find_magnitude(tail: str) -> int:
    """Magnitude factor from the text between the number and the next digit
    run; more than one magnitude word is a conflict."""
    nxt = re.search(r"\d", tail)
    scope = tail[: nxt.start()] if nxt else tail
    words = _MAGNITUDE_RE.findall(scope)
    if not words:
        return 1
    if len(words) > 1:
        raise AmbiguousMagnitude(f"conflicting magnitude markers {words} in {tail!r}")
    return _MAGNITUDE_FACTOR[words[0].lower()]


def parse_money(text: str) -> tuple[float, str]:
    """Parse one amount expression; returns (whole-unit amount, currency)."""
    if not isinstance(text, str):
        text = str(text)
    num = _NUMBER_RE.search(text)
    if num is None:
        raise Unparseable(f"no numeric value in {text!r}")

    codes = {"US$": "USD", "$": "USD"}
    currencies = {codes.get(m.group().upper(), m.group().upper())
                  for m in _CURRENCY_RE.finditer(text)}
    if len(currencies) > 1:
        raise Unparseable(f"conflicting currency markers in {text!r}")
    currency = currencies.pop() if currencies else "USD"

    factor = _find_magnitude(text[num.end():])
    value = Decimal(num.group().replace(",", "")) * factor
    return float(value), currency


def parse_number(text: str) -> float:
    """The numeric sub-grammar alone (no currency marker), as used for gold
    CSV amount cells: digits, separators, decimal point, optional magnitude."""
    stripped = text.strip()
    m = _NUMBER_RE.match(stripped)
    if m is None:
        raise Unparseable(f"no numeric value in {text!r}")
    rest = stripped[m.end():].strip()
    factor = 1
    if rest:
        whole = _MAGNITUDE_RE.fullmatch(rest)
        if whole is None:
            raise Unparseable(f"trailing garbage in numeric cell {text!r}")
        factor = _MAGNITUDE_FACTOR[whole.group().lower()]
    return float(Decimal(m.group().replace(",", "")) * factor)
