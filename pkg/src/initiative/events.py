"""Event and trait ingestion, canonical links, and the immutable :class:`Dataset`."""
from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import (
    DuplicatePersonError,
    InputError,
    MalformedRowError,
    SelfLoopError,
    TraitFormatError,
)

EVENT_HEADER = ("ts", "from", "to", "channel")
TRAITS = ("agreeableness", "conscientiousness", "extraversion", "neuroticism", "openness")
TRAIT_HEADER = ("person",) + TRAITS
CHANNELS = ("call", "text")

_PERSON_RE = re.compile(r"\S+")
_TS_RE = re.compile(r"[0-9]+")


class LinkKey(NamedTuple):
    a: str
    b: str


@dataclass(frozen=True)
class Event:
    ts: int
    sender: str
    receiver: str
    channel: str


@dataclass(frozen=True)
class TraitRecord:
    person: str
    agreeableness: float
    conscientiousness: float
    extraversion: float
    neuroticism: float
    openness: float

    def score(self, trait: str) -> float:
        return getattr(self, trait)


@dataclass
class IngestReport:
    rows_read: int = 0
    kept: int = 0
    deduplicated: int = 0
    rejected: list = field(default_factory=list)  # (line number, reason)

    def as_dict(self):
        return {
            "rows_read": self.rows_read,
            "kept": self.kept,
            "deduplicated": self.deduplicated,
            "rejected": len(self.rejected),
            "rejected_rows": [{"line": ln, "reason": why} for ln, why in self.rejected],
        }


def valid_person_id(pid) -> bool:
    return isinstance(pid, str) and _PERSON_RE.fullmatch(pid) is not None


def canonical_link(u: str, v: str) -> LinkKey:
    """Order a pair of person ids so the lexicographically smaller comes first."""
    if u == v:
        raise SelfLoopError(f"self-loop on {u!r}")
    return LinkKey(u, v) if u < v else LinkKey(v, u)


class Dataset:
    """Events grouped by canonical link, time-sorted within each link.

    Persons are indexed in sorted id order and links in sorted ``(a, b)``
    order, so integer codes and string order agree. Per-event columns are
    read-only numpy arrays:

    ``ts``, ``sender``, ``receiver`` (person indices), ``channel`` (0 call,
    1 text), ``link`` (link index). Events of link ``i`` occupy
    ``link_offsets[i]:link_offsets[i + 1]``.
    """

    def __init__(self, persons, link_a, link_b, ts, sender, receiver, channel, link, report=None):
        self.persons = tuple(persons)
        self.link_a = _frozen(link_a, np.int64)
        self.link_b = _frozen(link_b, np.int64)
        self.ts = _frozen(ts, np.int64)
        self.sender = _frozen(sender, np.int64)
        self.receiver = _frozen(receiver, np.int64)
        self.channel = _frozen(channel, np.int8)
        self.link = _frozen(link, np.int64)
        self.link_offsets = _frozen(
            np.searchsorted(self.link, np.arange(len(self.link_a) + 1)), np.int64
        )
        self.report = report
        self._person_index = None

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_arrays(cls, ts, senders, receivers, channels=None, report=None) -> "Dataset":
        """Build from parallel columns; ``channels`` defaults to all calls.

        Exact duplicate rows are collapsed (first occurrence kept). Self-loops
        raise :class:`SelfLoopError`.
        """
        ts = np.asarray(ts, dtype=np.int64)
        senders = np.asarray(senders, dtype=object).astype(str)
        receivers = np.asarray(receivers, dtype=object).astype(str)
        n = ts.shape[0]
        if channels is None:
            chan = np.zeros(n, dtype=np.int8)
        else:
            chan = np.asarray(channels)
            if chan.dtype.kind in "US" or chan.dtype == object:
                bad = ~np.isin(chan.astype(str), CHANNELS)
                if bad.any():
                    raise InputError(f"unknown channel {chan[bad][0]!r}")
                chan = (chan.astype(str) == "text").astype(np.int8)
            else:
                chan = chan.astype(np.int8)
        if not (senders.shape[0] == receivers.shape[0] == chan.shape[0] == n):
            raise InputError("column lengths differ")
        if n and (ts < 0).any():
            raise InputError("negative timestamp")
        loops = senders == receivers
        if loops.any():
            raise SelfLoopError(f"self-loop on {senders[loops][0]!r}")

        persons, inv = np.unique(np.concatenate([senders, receivers]), return_inverse=True)
        s_idx = inv[:n].astype(np.int64)
        r_idx = inv[n:].astype(np.int64)

        # exact-duplicate collapse, keeping the first occurrence
        if n:
            keys = np.stack([ts, s_idx, r_idx, chan.astype(np.int64)], axis=1)
            _, first = np.unique(keys, axis=0, return_index=True)
            keep = np.sort(first)
        else:
            keep = np.zeros(0, dtype=np.int64)
        dropped = n - keep.shape[0]
        ts, s_idx, r_idx, chan = ts[keep], s_idx[keep], r_idx[keep], chan[keep]

        P = max(len(persons), 1)
        lo = np.minimum(s_idx, r_idx)
        hi = np.maximum(s_idx, r_idx)
        code = lo * P + hi
        codes, link = np.unique(code, return_inverse=True)
        order = np.lexsort((np.arange(ts.shape[0]), ts, link))
        if report is not None:
            report.deduplicated += dropped
            report.kept = int(order.shape[0])
        return cls(
            persons=persons.tolist(),
            link_a=codes // P,
            link_b=codes % P,
            ts=ts[order],
            sender=s_idx[order],
            receiver=r_idx[order],
            channel=chan[order],
            link=link[order].astype(np.int64),
            report=report,
        )

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> "Dataset":
        events = list(events)
        return cls.from_arrays(
            [e.ts for e in events],
            [e.sender for e in events],
            [e.receiver for e in events],
            [e.channel for e in events],
        )

    # -- views ----------------------------------------------------------------

    @property
    def n_events(self) -> int:
        return int(self.ts.shape[0])

    @property
    def n_links(self) -> int:
        return int(self.link_a.shape[0])

    @property
    def n_persons(self) -> int:
        return len(self.persons)

    @property
    def person_index(self) -> dict:
        if self._person_index is None:
            self._person_index = {p: i for i, p in enumerate(self.persons)}
        return self._person_index

    def link_key(self, i: int) -> LinkKey:
        return LinkKey(self.persons[self.link_a[i]], self.persons[self.link_b[i]])

    @property
    def links(self) -> list:
        return [self.link_key(i) for i in range(self.n_links)]

    def link_events(self, i: int) -> list:
        lo, hi = self.link_offsets[i], self.link_offsets[i + 1]
        return [self._event(k) for k in range(lo, hi)]

    def events(self) -> Iterator[Event]:
        for k in range(self.n_events):
            yield self._event(k)

    def _event(self, k):
        return Event(
            int(self.ts[k]),
            self.persons[self.sender[k]],
            self.persons[self.receiver[k]],
            CHANNELS[self.channel[k]],
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.persons == other.persons and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("link_a", "link_b", "ts", "sender", "receiver", "channel", "link")
        )

    __hash__ = None

    def __repr__(self):
        return f"Dataset(events={self.n_events}, links={self.n_links}, persons={self.n_persons})"


def _frozen(values, dtype):
    arr = np.ascontiguousarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# -- text formats ---------------------------------------------------------------

def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "rb") as fh:
                return fh.read().decode("utf-8")
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc}") from exc
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _rows(text, delimiter):
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    for row in reader:
        if row:
            yield reader.line_num, row


def ingest_events(source, delimiter: str = "\t", strict: bool = True) -> Dataset:
    """Load an event file (header ``ts from to channel``) into a :class:`Dataset`.

    In strict mode the first malformed row raises :class:`MalformedRowError`;
    in lenient mode such rows are skipped and listed in ``dataset.report``.
    An empty source yields an empty dataset.
    """
    try:
        text = _read_text(source)
    except UnicodeDecodeError as exc:
        raise InputError(f"source is not valid UTF-8: {exc}") from exc
    report = IngestReport()
    rows = _rows(text, delimiter)
    head = next(rows, None)
    ts, snd, rcv, chan = [], [], [], []
    if head is not None:
        line, header = head
        if tuple(header) != EVENT_HEADER:
            raise MalformedRowError(line, f"expected header {EVENT_HEADER}, got {tuple(header)}")
        for line, row in rows:
            report.rows_read += 1
            reason = _check_event_row(row)
            if reason:
                if strict:
                    raise MalformedRowError(line, reason)
                report.rejected.append((line, reason))
                continue
            ts.append(int(row[0]))
            snd.append(row[1])
            rcv.append(row[2])
            chan.append(row[3])
    return Dataset.from_arrays(ts, snd, rcv, np.array(chan, dtype="<U4"), report=report)


def _check_event_row(row):
    if len(row) != 4:
        return f"expected 4 fields, got {len(row)}"
    t, u, v, c = row
    if not _TS_RE.fullmatch(t):
        return f"timestamp {t!r} is not a non-negative integer"
    if not valid_person_id(u) or not valid_person_id(v):
        return "person id empty or contains whitespace"
    if u == v:
        return f"self-loop on {u!r}"
    if c not in CHANNELS:
        return f"channel {c!r} not in {CHANNELS}"
    return None


def ingest_traits(source, delimiter: str = "\t") -> dict:
    """Load a Big Five trait table keyed by person id."""
    text = _read_text(source)
    rows = _rows(text, delimiter)
    head = next(rows, None)
    if head is None:
        raise TraitFormatError("trait file has no header")
    _, header = head
    missing = [c for c in TRAIT_HEADER if c not in header]
    if missing:
        raise TraitFormatError(f"missing trait columns: {', '.join(missing)}")
    col = {name: header.index(name) for name in TRAIT_HEADER}
    out = {}
    for line, row in rows:
        if len(row) != len(header):
            raise MalformedRowError(line, f"expected {len(header)} fields, got {len(row)}")
        person = row[col["person"]]
        if not valid_person_id(person):
            raise MalformedRowError(line, "person id empty or contains whitespace")
        if person in out:
            raise DuplicatePersonError(person)
        scores = {}
        for trait in TRAITS:
            raw = row[col[trait]]
            try:
                value = float(raw)
            except ValueError:
                raise MalformedRowError(line, f"{trait} score {raw!r} is not a number") from None
            if not math.isfinite(value):
                raise MalformedRowError(line, f"{trait} score {raw!r} is non-finite")
            scores[trait] = value
        out[person] = TraitRecord(person, **scores)
    return out


def write_events(dataset: Dataset, path, delimiter: str = "\t"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(delimiter.join(EVENT_HEADER) + "\n")
        P = dataset.persons
        for t, s, r, c in zip(dataset.ts, dataset.sender, dataset.receiver, dataset.channel):
            fh.write(f"{t}{delimiter}{P[s]}{delimiter}{P[r]}{delimiter}{CHANNELS[c]}\n")


def write_traits(traits: dict, path, delimiter: str = "\t"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(delimiter.join(TRAIT_HEADER) + "\n")
        for person in sorted(traits):
            rec = traits[person]
            vals = [repr(float(rec.score(t))) for t in TRAITS]
            fh.write(delimiter.join([person] + vals) + "\n")
