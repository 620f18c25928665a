import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from initiative import (
    Dataset,
    DuplicatePersonError,
    InputError,
    LinkKey,
    MalformedRowError,
    SelfLoopError,
    TraitFormatError,
    canonical_link,
    ingest_events,
    ingest_traits,
    write_events,
    write_traits,
)
from initiative.events import TRAIT_HEADER

from conftest import event_text

TRAIT_HEAD = "\t".join(TRAIT_HEADER)


def test_canonical_link_orders_endpoints():
    assert canonical_link("bob", "alice") == LinkKey("alice", "bob")
    assert canonical_link("alice", "bob") == ("alice", "bob")


def test_canonical_link_rejects_self_loop():
    with pytest.raises(SelfLoopError):
        canonical_link("alice", "alice")


@given(st.text(min_size=1), st.text(min_size=1))
def test_canonical_link_symmetric(u, v):
    if u == v:
        return
    k = canonical_link(u, v)
    assert k == canonical_link(v, u)
    assert k.a < k.b


def test_exact_duplicates_collapse():
    src = event_text([(10, "a", "b", "call"), (10, "a", "b", "call"), (20, "b", "a", "text")])
    ds = ingest_events(src)
    assert ds.n_events == 2
    assert ds.report.deduplicated == 1
    assert ds.report.rows_read == 3
    assert ds.report.kept == 2


def test_same_time_different_channel_is_not_a_duplicate():
    ds = ingest_events(event_text([(10, "a", "b", "call"), (10, "a", "b", "text")]))
    assert ds.n_events == 2


def test_bad_channel_rejected_with_line_number():
    src = event_text([(1, "a", "b", "call"), (2, "a", "b", "fax")])
    with pytest.raises(MalformedRowError) as err:
        ingest_events(src)
    assert err.value.line == 3
    ds = ingest_events(src, strict=False)
    assert ds.n_events == 1
    assert ds.report.rejected[0][0] == 3
    assert "fax" in ds.report.rejected[0][1]


@pytest.mark.parametrize(
    "row",
    [(-1, "a", "b", "call"), ("1.5", "a", "b", "call"), (1, "a", "a", "call"), (1, "", "b", "call"),
     (1, "a", "b")],
)
def test_malformed_rows(row):
    with pytest.raises(MalformedRowError):
        ingest_events(event_text([row]))


def test_empty_source_gives_empty_dataset():
    for src in (b"", event_text([])):
        ds = ingest_events(src)
        assert ds.n_events == 0
        assert ds.n_links == 0


def test_wrong_header():
    with pytest.raises(MalformedRowError):
        ingest_events(event_text([(1, "a", "b", "call")], header="time\tfrom\tto\tchannel"))


def test_invalid_utf8():
    with pytest.raises(InputError):
        ingest_events(b"ts\tfrom\tto\tchannel\n1\t\xff\tb\tcall\n")


def test_sources_and_delimiter(tmp_path):
    text = "ts,from,to,channel\n5,x,y,text\n1,y,x,call\n"
    p = tmp_path / "e.csv"
    p.write_text(text)
    a = ingest_events(str(p), delimiter=",")
    b = ingest_events(io.StringIO(text), delimiter=",")
    c = ingest_events(text.encode(), delimiter=",")
    assert a == b == c
    assert a.ts.tolist() == [1, 5]
    assert a.links == [LinkKey("x", "y")]


def test_dataset_is_read_only(make_dataset):
    ds = make_dataset([(1, "a", "b"), (2, "b", "a")])
    with pytest.raises(ValueError):
        ds.ts[0] = 5


event_rows = st.lists(
    st.tuples(
        st.integers(0, 10_000),
        st.sampled_from("abcde"),
        st.sampled_from("abcde"),
        st.sampled_from(["call", "text"]),
    ).filter(lambda r: r[1] != r[2]),
    max_size=60,
)


@given(event_rows)
def test_ingest_invariants(rows):
    src = event_text(rows)
    ds = ingest_events(src)
    assert ds == ingest_events(src)
    assert int(np.diff(ds.link_offsets).sum()) == ds.n_events == ds.report.kept
    assert ds.n_links == len({canonical_link(u, v) for _, u, v, _ in rows})
    for i in range(ds.n_links):
        t = ds.ts[ds.link_offsets[i]:ds.link_offsets[i + 1]]
        assert np.all(np.diff(t) >= 0)
    assert ds.n_events == len(set(rows))


@given(event_rows)
def test_write_read_round_trip(tmp_path_factory, rows):
    ds = ingest_events(event_text(rows))
    p = tmp_path_factory.mktemp("rt") / "events.tsv"
    write_events(ds, p)
    assert ingest_events(str(p)) == ds


def test_stable_order_for_equal_timestamps(make_dataset):
    ds = make_dataset([(5, "b", "a", "text"), (5, "a", "b", "call")])
    assert [e.sender for e in ds.events()] == ["b", "a"]


def test_traits_single_row():
    src = f"{TRAIT_HEAD}\np1\t3\t2.5\t4\t1\t5\n".encode()
    traits = ingest_traits(src)
    assert len(traits) == 1
    assert traits["p1"].extraversion == 4.0
    assert traits["p1"].score("openness") == 5.0


def test_traits_column_order_free():
    src = "openness\tperson\tagreeableness\tconscientiousness\textraversion\tneuroticism\n1\tq\t2\t3\t4\t5\n"
    assert ingest_traits(src.encode())["q"].openness == 1.0


def test_traits_duplicate_person():
    src = f"{TRAIT_HEAD}\np1\t1\t1\t1\t1\t1\np1\t2\t2\t2\t2\t2\n".encode()
    with pytest.raises(DuplicatePersonError) as err:
        ingest_traits(src)
    assert err.value.person == "p1"


@pytest.mark.parametrize("bad", ["NaN", "inf", "high"])
def test_traits_non_finite(bad):
    with pytest.raises(MalformedRowError):
        ingest_traits(f"{TRAIT_HEAD}\np1\t1\t{bad}\t1\t1\t1\n".encode())


def test_traits_missing_column():
    with pytest.raises(TraitFormatError):
        ingest_traits(b"person\tagreeableness\np1\t1\n")


def test_traits_round_trip(tmp_path):
    traits = ingest_traits(f"{TRAIT_HEAD}\nb\t1\t2\t3\t4\t5\na\t0.5\t0.25\t1\t1\t1\n".encode())
    p = tmp_path / "t.tsv"
    write_traits(traits, p)
    assert ingest_traits(str(p)) == traits


def test_from_events_matches_from_arrays():
    from initiative import Event

    evs = [Event(3, "b", "a", "text"), Event(1, "a", "b", "call")]
    ds = Dataset.from_events(evs)
    assert list(ds.events()) == sorted(evs, key=lambda e: e.ts)
