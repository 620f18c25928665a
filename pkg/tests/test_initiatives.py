import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from initiative import (
    DAY,
    CountTable,
    DegenerateInputError,
    InsufficientDataError,
    LinkKey,
    extract_initiatives,
    fit_power_law,
    interevent_gaps,
    link_counts,
)
from initiative.initiatives import WEEK, fit_interevent, log_binned_slope, power_law_stderr
from initiative.synthetic import sample_truncated_power_law, stream

from conftest import dataset


def pairs(inits):
    return [(r.actor, r.ts) for r in inits.records()]


def test_follow_up_and_initiative_example():
    ds = dataset([(0, "A", "B"), (3600, "B", "A"), (108000, "A", "B")])
    inits = extract_initiatives(ds, 86400)
    assert pairs(inits) == [("A", 0), ("A", 108000)]
    assert inits.n_followups == 1


def test_single_event_is_an_initiative():
    inits = extract_initiatives(dataset([(42, "x", "y")]))
    assert pairs(inits) == [("x", 42)]


def test_threshold_is_strict():
    ds = dataset([(0, "A", "B"), (86400, "B", "A"), (86400 + 86401, "B", "A")])
    inits = extract_initiatives(ds)
    assert pairs(inits) == [("A", 0), ("B", 86400 + 86401)]


def test_ordinals_and_export(tmp_path):
    ds = dataset([(0, "b", "a"), (2 * DAY, "a", "b"), (0, "c", "a"), (5 * DAY, "c", "a")])
    inits = extract_initiatives(ds)
    recs = inits.per_link()
    assert [[r.ordinal for r in link] for link in recs] == [[0, 1], [0, 1]]
    p = tmp_path / "inits.tsv"
    inits.write(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "link_a\tlink_b\tactor\tts\tordinal"
    assert lines[1] == "a\tb\tb\t0\t0"


def test_gaps_two_events():
    stats = interevent_gaps(dataset([(100, "a", "b"), (160, "b", "a")]))
    assert stats.gaps.tolist() == [60]
    assert stats.fraction_below_threshold == 1.0


def test_gaps_empty():
    stats = interevent_gaps(dataset([(100, "a", "b"), (160, "c", "a")]))
    assert stats.gaps.size == 0
    assert stats.fraction_below_threshold is None


def test_gaps_pool_calls_and_texts():
    stats = interevent_gaps(dataset([(0, "a", "b", "call"), (10, "a", "b", "text"), (30, "b", "a", "call")]))
    assert sorted(stats.gaps.tolist()) == [10, 20]


def _power_law_cdf(t, alpha, lo, hi):
    beta = alpha + 1.0
    return (t ** beta - lo ** beta) / (hi ** beta - lo ** beta)


def test_fraction_below_day_for_power_law_gaps():
    alpha, lo = -1.26, 60.0
    # choose the upper cutoff so that exactly 88% of the mass lies at or below one day
    hi = brentq(lambda h: _power_law_cdf(DAY, alpha, lo, h) - 0.88, DAY * 1.01, 1e9)
    gaps = np.rint(sample_truncated_power_law(alpha, lo, hi, 1_000_000, stream(0, 11))).astype(np.int64)
    ts = np.concatenate([[0], np.cumsum(gaps)])
    snd = np.where(np.arange(ts.size) % 2 == 0, "a", "b")
    rcv = np.where(snd == "a", "b", "a")
    from initiative import Dataset

    stats = interevent_gaps(Dataset.from_arrays(ts, snd, rcv))
    assert stats.gaps.size == 1_000_000
    assert abs(stats.fraction_below_threshold - 0.88) <= 0.01


@pytest.mark.parametrize("alpha", [-1.26, -2.0])
def test_power_law_recovery(alpha):
    g = sample_truncated_power_law(alpha, 60.0, WEEK, 1_000_000, stream(1, 12))
    assert abs(fit_power_law(g, 60.0, WEEK) - alpha) <= 0.05


@pytest.mark.parametrize("alpha", [-0.5, -1.0, -1.26, -3.0])
def test_power_law_within_three_standard_errors(alpha):
    n = 5000
    for seed in range(3):
        g = sample_truncated_power_law(alpha, 60.0, WEEK, n, stream(seed, 13))
        est = fit_power_law(g)
        assert abs(est - alpha) <= 3 * power_law_stderr(est, n)


def test_power_law_ignores_out_of_range_gaps():
    rng = stream(2, 14)
    inside = sample_truncated_power_law(-1.5, 60.0, WEEK, 20000, rng)
    noisy = np.concatenate([inside, np.full(5000, 5.0), np.full(5000, 1e8)])
    assert fit_power_law(noisy) == fit_power_law(inside)


def test_power_law_errors():
    with pytest.raises(InsufficientDataError):
        fit_power_law(np.full(99, 100.0) * np.arange(1, 100))
    with pytest.raises(ValueError):
        fit_power_law(np.arange(1, 1000) * 100.0, t_min=0)
    with pytest.raises(DegenerateInputError):
        fit_power_law(np.full(500, 3600.0))


def test_fit_interevent_and_diagnostic_slope():
    g = sample_truncated_power_law(-1.26, 60.0, WEEK, 200_000, stream(3, 15))
    from initiative.initiatives import InterEventStats

    stats = fit_interevent(InterEventStats(g, None))
    assert stats.alpha_stderr > 0
    assert abs(stats.alpha + 1.26) < 0.02
    assert abs(log_binned_slope(g) + 1.26) < 0.1


def test_link_counts_examples():
    ds = dataset([(0, "A", "B"), (2 * DAY, "A", "B"), (4 * DAY, "B", "A"), (0, "A", "C"), (3 * DAY, "A", "C")])
    counts = list(link_counts(extract_initiatives(ds)))
    assert counts[0].link == LinkKey("A", "B") and (counts[0].n_a, counts[0].n_b, counts[0].total) == (2, 1, 3)
    assert (counts[1].n_a, counts[1].n_b) == (2, 0)


def test_link_counts_brute_force():
    rng = np.random.default_rng(5)
    people = [f"p{i}" for i in range(12)]
    rows = []
    for k in range(1000):
        u, v = rng.choice(12, size=2, replace=False)
        rows.append((int(k * (DAY + 1)), people[u], people[v]))
    ds = dataset(rows)
    inits = extract_initiatives(ds)
    assert len(inits) == 1000
    tally = {}
    for _, u, v in rows:
        key = tuple(sorted((u, v)))
        a, b = tally.get(key, (0, 0))
        tally[key] = (a + 1, b) if u == key[0] else (a, b + 1)
    got = {tuple(c.link): (c.n_a, c.n_b) for c in link_counts(inits)}
    assert got == tally


def test_count_table_io(tmp_path):
    t = CountTable([LinkKey("a", "b"), LinkKey("a", "c")], [3, 0], [1, 4])
    p = tmp_path / "c.tsv"
    t.write(p)
    assert p.read_text().splitlines()[0] == "a\tb\tn_a\tn_b"
    back = CountTable.read(p)
    assert list(back) == list(t)
    assert len(t.reciprocal()) == 1


link_streams = st.lists(
    st.tuples(st.integers(0, 20 * DAY), st.sampled_from("abcd"), st.sampled_from("abcd")).filter(
        lambda r: r[1] != r[2]
    ),
    min_size=1,
    max_size=50,
)


@given(link_streams, st.integers(0, 5 * DAY), st.integers(0, 5 * DAY))
def test_threshold_invariants(rows, t1, t2):
    ds = dataset(rows)
    lo, hi = sorted((t1, t2))
    a = extract_initiatives(ds, lo)
    b = extract_initiatives(ds, hi)
    assert len(a) + a.n_followups == ds.n_events
    assert np.all(b.per_link_counts() <= a.per_link_counts())
    assert np.all(extract_initiatives(ds, math.inf).per_link_counts() == 1)
    for i in range(ds.n_links):
        t = a.ts[a.link_offsets[i]:a.link_offsets[i + 1]]
        assert np.all(np.diff(t) > lo)
    ends = np.stack([ds.link_a[a.link], ds.link_b[a.link]])
    assert np.all((a.actor == ends[0]) | (a.actor == ends[1]))


@given(st.lists(st.integers(0, 10 * DAY), min_size=1, max_size=40, unique=True))
def test_zero_threshold_with_distinct_times_keeps_everything(times):
    ds = dataset([(t, "a", "b") for t in times])
    assert len(extract_initiatives(ds, 0)) == ds.n_events


def test_simultaneous_events_are_follow_ups_even_at_zero_threshold():
    ds = dataset([(5, "a", "b", "call"), (5, "b", "a", "text")])
    assert len(extract_initiatives(ds, 0)) == 1
