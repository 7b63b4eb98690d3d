from datetime import date, datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from chronos.models import DatetimeRange
from chronos.temporal import (
    Unrecognized,
    add_months,
    classify,
    resolve,
    resolve_text,
)
from oracles import AMBIGUOUS_POLICY, temporal_cases

UTC = timezone.utc
REF = datetime(2024, 2, 15, 10, 0, tzinfo=UTC)

refs = st.datetimes(min_value=datetime(1995, 1, 1), max_value=datetime(2045, 1, 1)).map(
    lambda d: d.replace(microsecond=0, tzinfo=UTC)
)


@pytest.mark.parametrize("text, ref, start, end", temporal_cases(n_refs=4, seed=3), ids=lambda v: str(v)[:24])
def test_against_calendar_oracle(text, ref, start, end):
    r = resolve_text(text, ref)
    assert (r.start, r.end) == (start, end)


@pytest.mark.parametrize(
    "text, kind",
    [
        ("March 3, 2024", "explicit"),
        ("yesterday", "relative"),
        ("last month", "relative"),
        ("recently", "ambiguous"),
        ("a while ago", "ambiguous"),
    ],
)
def test_kinds(text, kind):
    assert classify(text).kind == kind


def test_last_month_is_previous_calendar_month():
    r = resolve(classify("last month"), REF)
    assert (r.start.date(), r.end.date(), r.granularity) == (date(2024, 1, 1), date(2024, 1, 31), "month")


def test_recently_policy_window():
    r = resolve(classify("recently"), REF)
    assert r.start == REF - timedelta(days=30) and r.end == REF


def test_anchored_week_after_needs_anchor():
    vacation = DatetimeRange.for_days(date(2024, 3, 1), date(2024, 3, 10))
    r = resolve(classify("the week after my vacation", anchor=vacation), REF)
    assert (r.start.date(), r.end.date(), r.granularity) == (date(2024, 3, 11), date(2024, 3, 17), "week")
    with pytest.raises(Unrecognized):
        classify("the week after my vacation")


def test_anchored_with_inline_explicit_anchor():
    r = resolve(classify("the day after March 3, 2024"), REF)
    assert r.start.date() == date(2024, 3, 4)


def test_longest_match_wins():
    # "the day before yesterday" must not resolve as plain "yesterday"
    r = resolve_text("the day before yesterday", REF)
    assert r.start.date() == date(2024, 2, 13)


def test_impossible_date_and_gibberish_fall_back():
    assert resolve_text("2024-02-30", REF).start.date() == date(2024, 1, 1)  # year fallback
    r = resolve_text("at some point, who knows", REF)
    assert (r.start.date(), r.end.date()) == (REF.date(), REF.date())
    with pytest.raises(Unrecognized):
        classify("at some point, who knows")


def test_timezone_offsets_normalise_to_utc():
    r = resolve_text("2024-02-14T18:20:00+05:30", REF)
    assert r.start == datetime(2024, 2, 14, 12, 50, tzinfo=UTC) == r.end


@given(refs, st.sampled_from(sorted(AMBIGUOUS_POLICY)))
def test_ambiguous_widths(ref, text):
    lo, hi = AMBIGUOUS_POLICY[text]
    r = resolve_text(text, ref)
    assert r.end - r.start == timedelta(days=hi - lo)
    assert r.start == ref + timedelta(days=lo)


@given(refs)
def test_last_week_precedes_this_week(ref):
    last = resolve_text("last week", ref)
    this = resolve_text("this week", ref)
    assert last.end + timedelta(seconds=1) == this.start
    assert this.start.weekday() == 0 and (this.end - this.start).days == 6


@given(refs, st.sampled_from(["yesterday", "last week", "last month", "last year", "3 days ago", "last friday"]))
def test_past_forms_end_before_reference(ref, text):
    assert resolve_text(text, ref).end < ref.replace(hour=0, minute=0, second=0) + timedelta(days=1)
    assert resolve_text(text, ref).start <= ref


@given(refs, st.integers(min_value=-40, max_value=40))
def test_add_months_round_trip_on_first_of_month(ref, n):
    d = ref.date().replace(day=1)
    assert add_months(add_months(d, n), -n) == d


@given(refs)
def test_resolution_is_deterministic(ref):
    assert resolve_text("next month", ref) == resolve_text("next month", ref)
