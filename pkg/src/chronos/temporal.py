"""Normalize natural-language time references into UTC datetime ranges.

Expressions are classified against the pattern table in
``data/temporal_patterns.json`` (longest match wins) and resolved with plain
calendar arithmetic relative to a reference timestamp.
"""

from __future__ import annotations

import calendar
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from functools import lru_cache
from importlib import resources
from typing import Any, Literal, Mapping

from .models import DatetimeRange, day_end, day_start, parse_datetime

Kind = Literal["explicit", "relative", "ambiguous", "anchored_relative"]

MONTHS = {
    name: i
    for i in range(1, 13)
    for name in (calendar.month_name[i].lower(), calendar.month_abbr[i].lower())
}
MONTHS["sept"] = 9
WEEKDAYS = {calendar.day_name[i].lower(): i for i in range(7)}
_EPOCH = datetime(1970, 1, 1)


class Unrecognized(ValueError):
    """No pattern in the table matches the expression."""


@dataclass(frozen=True)
class PatternRule:
    name: str
    kind: Kind
    rule: str
    regex: re.Pattern[str]
    order: int
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class PatternTable:
    rules: tuple[PatternRule, ...]
    numbers: Mapping[str, int]

    def number(self, token: str) -> int:
        token = token.strip()
        if token.isdigit():
            return int(token)
        return self.numbers[token]


@lru_cache(maxsize=None)
def load_pattern_table(path: str | None = None) -> PatternTable:
    """Load and compile the pattern table (the bundled one by default)."""
    if path is None:
        raw = resources.files("chronos").joinpath("data/temporal_patterns.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    spec = json.loads(raw)
    vocab: dict[str, str] = spec["vocab"]
    rules = []
    for order, entry in enumerate(spec["patterns"]):
        pattern = entry["pattern"]
        for key, expansion in vocab.items():
            pattern = pattern.replace("{" + key + "}", expansion)
        params = {k: v for k, v in entry.items() if k not in ("name", "kind", "rule", "pattern")}
        rules.append(
            PatternRule(entry["name"], entry["kind"], entry["rule"], re.compile(pattern), order, params)
        )
    return PatternTable(tuple(rules), dict(spec["numbers"]))


@dataclass(frozen=True)
class TemporalExpression:
    raw: str
    kind: Kind
    anchor: DatetimeRange | None = None
    rule: str = ""
    groups: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind == "anchored_relative" and self.anchor is None:
            raise ValueError("anchored_relative expressions need an anchor range")


def _find_matches(text: str, table: PatternTable) -> list[tuple[PatternRule, re.Match[str]]]:
    found = []
    for rule in table.rules:
        m = rule.regex.search(text)
        if m is not None:
            found.append((rule, m))
    found.sort(key=lambda rm: (-(rm[1].end() - rm[1].start()), rm[0].order))
    return found


def classify(
    raw: str,
    anchor: DatetimeRange | None = None,
    table: PatternTable | None = None,
) -> TemporalExpression:
    """Classify ``raw`` by the longest matching table pattern.

    Anchored forms ("the week after ...") are only accepted when an anchor is
    supplied or the trailing text is itself an explicit date; otherwise the
    next-longest match is used.
    """
    if not raw or not raw.strip():
        raise Unrecognized("empty expression")
    table = table or load_pattern_table()
    text = " ".join(raw.lower().split())
    for rule, m in _find_matches(text, table):
        groups = {k: v for k, v in m.groupdict().items() if v is not None}
        if rule.kind == "anchored_relative":
            use_anchor = anchor
            if use_anchor is None:
                use_anchor = _explicit_anchor(groups.get("anchor_text", ""), table)
            if use_anchor is None:
                continue
            return TemporalExpression(raw, rule.kind, use_anchor, rule.name, groups)
        expr = TemporalExpression(raw, rule.kind, None, rule.name, groups)
        if rule.kind == "explicit":
            try:
                resolve(expr, _EPOCH, table)
            except ValueError:  # e.g. 2024-02-30
                continue
        return expr
    raise Unrecognized(f"no temporal pattern matches {raw!r}")


def _explicit_anchor(text: str, table: PatternTable) -> DatetimeRange | None:
    text = text.strip()
    if not text:
        return None
    try:
        expr = classify(text, table=table)
    except Unrecognized:
        return None
    if expr.kind != "explicit":
        return None
    return resolve(expr, _EPOCH, table)


# ---------------------------------------------------------------------------
# calendar arithmetic
# ---------------------------------------------------------------------------


def add_months(d: date, months: int) -> date:
    """Shift ``d`` by whole months, clamping the day to the target month length."""
    total = d.year * 12 + (d.month - 1) + months
    year, month = divmod(total, 12)
    month += 1
    return date(year, month, min(d.day, calendar.monthrange(year, month)[1]))


def month_range(year: int, month: int) -> DatetimeRange:
    last = calendar.monthrange(year, month)[1]
    return DatetimeRange.for_days(date(year, month, 1), date(year, month, last), "month")


def year_range(year: int) -> DatetimeRange:
    return DatetimeRange.for_days(date(year, 1, 1), date(year, 12, 31), "year")


def iso_week_range(d: date) -> DatetimeRange:
    monday = d - timedelta(days=d.weekday())
    return DatetimeRange.for_days(monday, monday + timedelta(days=6), "week")


def _calendar_unit(unit: str, d: date, offset: int) -> DatetimeRange:
    if unit == "week":
        return iso_week_range(d + timedelta(weeks=offset))
    if unit == "month":
        shifted = add_months(d.replace(day=1), offset)
        return month_range(shifted.year, shifted.month)
    if unit == "year":
        return year_range(d.year + offset)
    raise ValueError(f"unknown calendar unit {unit!r}")


# ---------------------------------------------------------------------------
# resolution
# ---------------------------------------------------------------------------


def resolve(
    expr: TemporalExpression,
    ref: datetime | str,
    table: PatternTable | None = None,
) -> DatetimeRange:
    """Resolve a classified expression relative to ``ref``."""
    table = table or load_pattern_table()
    ref = parse_datetime(ref)
    rule = next((r for r in table.rules if r.name == expr.rule), None)
    if rule is None:
        raise ValueError(f"expression was classified with an unknown rule {expr.rule!r}")
    g = expr.groups
    p = rule.params
    today = ref.date()

    if rule.rule == "iso_datetime":
        tz = g.get("tz", "z")
        if tz == "z":
            tz = "+00:00"
        elif ":" not in tz:
            tz = f"{tz[:3]}:{tz[3:]}"
        text = f"{g['date']}T{g['clock']}{tz}"
        when = parse_datetime(text)
        return DatetimeRange.instant(when)
    if rule.rule == "ymd":
        month = int(g["month_num"]) if "month_num" in g else MONTHS[g["month"]]
        return DatetimeRange.for_day(date(int(g["year"]), month, int(g["day"])))
    if rule.rule == "month_year":
        return month_range(int(g["year"]), MONTHS[g["month"]])
    if rule.rule == "year":
        return year_range(int(g["year"]))

    if rule.rule == "day_offset":
        return DatetimeRange.for_day(today + timedelta(days=p["offset"]))
    if rule.rule == "n_days":
        return DatetimeRange.for_day(today + timedelta(days=p["sign"] * table.number(g["n"])))
    if rule.rule == "n_calendar":
        n = p["sign"] * table.number(g["n"])
        return _calendar_unit(p["unit"], today, n)
    if rule.rule == "trailing_days":
        days = table.number(g["n"]) * p["days_per_unit"]
        return DatetimeRange(day_start(today - timedelta(days=days)), day_end(today), "window")
    if rule.rule == "calendar":
        return _calendar_unit(p["unit"], today, p["offset"])
    if rule.rule == "weekday":
        target = WEEKDAYS[g["weekday"]]
        if p["sign"] < 0:
            delta = (today.weekday() - target) % 7 or 7
            return DatetimeRange.for_day(today - timedelta(days=delta))
        delta = (target - today.weekday()) % 7 or 7
        return DatetimeRange.for_day(today + timedelta(days=delta))
    if rule.rule == "weekend":
        monday = today - timedelta(days=today.weekday()) + timedelta(weeks=p["offset"])
        return DatetimeRange.for_days(monday + timedelta(days=5), monday + timedelta(days=6))
    if rule.rule == "named_month":
        month = MONTHS[g["month"]]
        year = today.year
        if month > today.month or (p["strict"] and month == today.month):
            year -= 1
        return month_range(year, month)
    if rule.rule == "window":
        return DatetimeRange(
            ref + timedelta(days=p["start_offset_days"]),
            ref + timedelta(days=p["end_offset_days"]),
            "window",
        )

    if rule.rule in ("anchored_period", "anchored_offset"):
        anchor = expr.anchor
        if anchor is None:
            raise ValueError("anchored expression without anchor")
        return _resolve_anchored(rule, g, anchor, table)
    raise ValueError(f"no resolver for rule {rule.rule!r}")


def _resolve_anchored(
    rule: PatternRule, g: Mapping[str, str], anchor: DatetimeRange, table: PatternTable
) -> DatetimeRange:
    unit = g["unit"]
    after = rule.params["sign"] > 0
    pivot = anchor.end.date() if after else anchor.start.date()

    if rule.rule == "anchored_offset":
        n = table.number(g["n"])
        if unit == "month":
            return DatetimeRange.for_day(add_months(pivot, n if after else -n))
        days = n * (7 if unit == "week" else 1)
        return DatetimeRange.for_day(pivot + timedelta(days=days if after else -days))

    if unit == "day":
        return DatetimeRange.for_day(pivot + timedelta(days=1 if after else -1))
    if unit == "week":
        if after:
            first = pivot + timedelta(days=1)
            return DatetimeRange.for_days(first, first + timedelta(days=6), "week")
        last = pivot - timedelta(days=1)
        return DatetimeRange.for_days(last - timedelta(days=6), last, "week")
    months = 1 if unit == "month" else 12
    if after:
        first = pivot + timedelta(days=1)
        return DatetimeRange.for_days(first, add_months(first, months) - timedelta(days=1), unit)  # type: ignore[arg-type]
    return DatetimeRange.for_days(add_months(pivot, -months), pivot - timedelta(days=1), unit)  # type: ignore[arg-type]


def find_span(text: str, table: PatternTable | None = None) -> tuple[int, int] | None:
    """Character span of the longest temporal expression in ``text``, or None."""
    table = table or load_pattern_table()
    found = _find_matches(text.lower(), table)
    return found[0][1].span() if found else None


def resolve_text(
    raw: str,
    ref: datetime | str,
    anchor: DatetimeRange | None = None,
) -> DatetimeRange:
    """Classify and resolve; unrecognized text falls back to the reference day."""
    ref = parse_datetime(ref)
    try:
        return resolve(classify(raw, anchor), ref)
    except Unrecognized:
        return DatetimeRange.for_day(ref.date())
