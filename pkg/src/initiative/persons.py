"""Per-person initiative ratio, friend abundance, binned trends and correlations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import DegenerateInputError, InsufficientDataError
from .events import TRAITS
from .initiatives import Initiatives

DEFAULT_WINDOW = 20
DEFAULT_MIN_TOTAL = 200


@dataclass(frozen=True)
class PersonEstimate:
    person: str
    outgoing: int
    total: int
    mu_p: Optional[float]
    eligible: bool
    friend_abundance: Optional[float] = None


class PersonTable:
    """Column-wise person statistics; ``mu_p`` and ``friend_abundance`` are NaN when undefined."""

    def __init__(self, persons, outgoing, total, min_total, friend_abundance=None, window=DEFAULT_WINDOW):
        self.persons = list(persons)
        self.outgoing = np.asarray(outgoing, dtype=np.int64)
        self.total = np.asarray(total, dtype=np.int64)
        self.min_total = min_total
        self.window = window
        with np.errstate(invalid="ignore", divide="ignore"):
            self.mu_p = np.where(self.total > 0, self.outgoing / np.maximum(self.total, 1), np.nan)
        self.eligible = self.total >= min_total
        if friend_abundance is None:
            friend_abundance = np.full(len(self.persons), np.nan)
        self.friend_abundance = np.asarray(friend_abundance, dtype=np.float64)

    def __len__(self):
        return len(self.persons)

    def estimates(self) -> list:
        def opt(v):
            return None if np.isnan(v) else float(v)

        return [
            PersonEstimate(p, int(o), int(t), opt(m), bool(e), opt(f))
            for p, o, t, m, e, f in zip(
                self.persons, self.outgoing, self.total, self.mu_p, self.eligible, self.friend_abundance
            )
        ]

    def write(self, path, delimiter="\t"):
        def fmt(v):
            return "" if np.isnan(v) else repr(float(v))

        cols = ("person", "outgoing", "total", "mu_p", "friend_abundance", "eligible")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(delimiter.join(cols) + "\n")
            for p, o, t, m, f, e in zip(
                self.persons, self.outgoing, self.total, self.mu_p, self.friend_abundance, self.eligible
            ):
                row = (p, str(o), str(t), fmt(m), fmt(f), "1" if e else "0")
                fh.write(delimiter.join(row) + "\n")


def person_initiative_ratio(initiatives: Initiatives, min_total: int = DEFAULT_MIN_TOTAL) -> PersonTable:
    """Outgoing over total initiatives for every person, across all their links."""
    ds = initiatives.dataset
    P = ds.n_persons
    outgoing = np.bincount(initiatives.actor, minlength=P)
    total = np.bincount(ds.link_a[initiatives.link], minlength=P) + np.bincount(
        ds.link_b[initiatives.link], minlength=P
    )
    return PersonTable(ds.persons, outgoing, total, min_total)


def incoming_streams(initiatives: Initiatives) -> list:
    """For each person, counterparty indices of their incoming initiatives in time order."""
    ds = initiatives.dataset
    a = ds.link_a[initiatives.link]
    b = ds.link_b[initiatives.link]
    target = np.where(initiatives.actor == a, b, a)
    order = np.lexsort((initiatives.link, initiatives.ts, target))
    tgt = target[order]
    src = initiatives.actor[order]
    off = np.searchsorted(tgt, np.arange(ds.n_persons + 1))
    return [src[off[p]:off[p + 1]] for p in range(ds.n_persons)]


def window_distinct_counts(counterparties, window: int = DEFAULT_WINDOW, stride: int = 1) -> np.ndarray:
    """Distinct counterparties in each window of ``window`` consecutive entries."""
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")
    ids = np.asarray(counterparties)
    if ids.dtype.kind not in "iu":
        _, ids = np.unique(ids, return_inverse=True)
    return kernels.window_distinct(ids.astype(np.int64), window, stride)


def friend_abundance(counterparties, window: int = DEFAULT_WINDOW, stride: int = 1) -> Optional[float]:
    """Mean number of distinct counterparties over windows of consecutive incoming initiatives.

    Returns ``None`` when there are fewer than ``window`` incoming initiatives.
    ``stride=window`` gives disjoint windows.
    """
    counts = window_distinct_counts(counterparties, window, stride)
    if counts.size == 0:
        return None
    return float(counts.mean())


def with_friend_abundance(table: PersonTable, initiatives: Initiatives, window=DEFAULT_WINDOW, stride=1) -> PersonTable:
    streams = incoming_streams(initiatives)
    fa = np.full(len(table), np.nan)
    for p, s in enumerate(streams):
        v = friend_abundance(s, window, stride)
        if v is not None:
            fa[p] = v
    return PersonTable(table.persons, table.outgoing, table.total, table.min_total, fa, window)


@dataclass
class BinnedMeans:
    edges: np.ndarray
    centers: np.ndarray
    means: np.ndarray   # NaN for empty bins
    counts: np.ndarray


def binned_means(x, y, bins: int = 10) -> BinnedMeans:
    """Mean of ``y`` in equal-width bins of ``x`` over ``[min x, max x]``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0:
        raise InsufficientDataError("no samples to bin")
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    if bins < 1:
        raise ValueError("need at least one bin")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        edges = np.array([lo, hi])
        idx = np.zeros(x.size, dtype=np.int64)
        bins = 1
    else:
        edges = np.linspace(lo, hi, bins + 1)
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    sums = np.bincount(idx, weights=y, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return BinnedMeans(edges, 0.5 * (edges[:-1] + edges[1:]), means, counts)


@dataclass
class CorrelationResult:
    r: float
    stderr: float
    n: int


def _pearson_rows(xs, ys):
    xc = xs - xs.mean(axis=-1, keepdims=True)
    yc = ys - ys.mean(axis=-1, keepdims=True)
    den = np.sqrt((xc * xc).sum(axis=-1) * (yc * yc).sum(axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return (xc * yc).sum(axis=-1) / den


def pearson_with_bootstrap(x, y, rounds: int = 1000, seed: int = 0) -> CorrelationResult:
    """Pearson r with the standard deviation of r over ``rounds`` paired resamples."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    if x.size < 3:
        raise InsufficientDataError("need at least three paired samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("samples must be finite")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateInputError("zero variance in x or y")
    r = float(np.clip(_pearson_rows(x, y), -1.0, 1.0))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 3])))
    se = 0.0
    if rounds >= 2:
        rs = np.empty(rounds)
        chunk = max(1, 2_000_000 // x.size)
        for lo in range(0, rounds, chunk):
            idx = rng.integers(0, x.size, size=(min(chunk, rounds - lo), x.size))
            rs[lo:lo + idx.shape[0]] = _pearson_rows(x[idx], y[idx])
        rs = rs[np.isfinite(rs)]
        se = float(np.std(rs, ddof=1)) if rs.size >= 2 else math.nan
    return CorrelationResult(r, se, int(x.size))


@dataclass
class TraitCorrelations:
    results: dict   # trait -> CorrelationResult
    n_joined: int


def trait_correlations(
    table: PersonTable, traits: dict, rounds: int = 1000, seed: int = 0, eligible_only: bool = False
) -> TraitCorrelations:
    """Correlate ``mu_p`` with each Big Five trait over persons present in both inputs."""
    keep = ~np.isnan(table.mu_p)
    if eligible_only:
        keep &= table.eligible
    rows = [(table.mu_p[i], traits[p]) for i, p in enumerate(table.persons) if keep[i] and p in traits]
    if len(rows) < 3:
        raise InsufficientDataError(f"only {len(rows)} persons have both initiatives and traits")
    mu = np.array([m for m, _ in rows])
    out = {}
    for k, trait in enumerate(TRAITS):
        scores = np.array([rec.score(trait) for _, rec in rows])
        out[trait] = pearson_with_bootstrap(mu, scores, rounds, seed + k)
    return TraitCorrelations(out, len(rows))
