"""Initiative classification, inter-event gaps and per-link initiative counts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateInputError, InputError, InsufficientDataError
from .events import Dataset, LinkKey

DAY = 86400
MINUTE = 60
WEEK = 7 * DAY


@dataclass(frozen=True)
class InitiativeRecord:
    link: LinkKey
    actor: str
    ts: int
    ordinal: int


class Initiatives:
    """The initiative stream of a dataset.

    ``event`` indexes back into the dataset's event arrays; ``side`` is 0
    when the actor is the link's ``a`` endpoint and 1 for ``b``. Initiatives of
    link ``i`` sit at ``link_offsets[i]:link_offsets[i + 1]``.
    """

    def __init__(self, dataset: Dataset, mask: np.ndarray, threshold: float):
        self.dataset = dataset
        self.threshold = threshold
        self.event = np.flatnonzero(mask)
        self.link = dataset.link[self.event]
        self.actor = dataset.sender[self.event]
        self.ts = dataset.ts[self.event]
        self.side = (self.actor != dataset.link_a[self.link]).astype(np.int8)
        self.link_offsets = np.searchsorted(self.link, np.arange(dataset.n_links + 1))
        self.ordinal = np.arange(self.event.shape[0]) - self.link_offsets[self.link]

    def __len__(self):
        return int(self.event.shape[0])

    @property
    def n_followups(self) -> int:
        return self.dataset.n_events - len(self)

    def per_link_counts(self) -> np.ndarray:
        return np.diff(self.link_offsets)

    def records(self) -> Iterator[InitiativeRecord]:
        ds = self.dataset
        for k in range(len(self)):
            yield InitiativeRecord(
                ds.link_key(self.link[k]), ds.persons[self.actor[k]],
                int(self.ts[k]), int(self.ordinal[k]),
            )

    def per_link(self) -> list:
        """One list of :class:`InitiativeRecord` per link, in link order."""
        out = [[] for _ in range(self.dataset.n_links)]
        for rec, i in zip(self.records(), self.link):
            out[i].append(rec)
        return out

    def write(self, path, delimiter="\t"):
        ds = self.dataset
        P = ds.persons
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(delimiter.join(("link_a", "link_b", "actor", "ts", "ordinal")) + "\n")
            for i, a, t, o in zip(self.link, self.actor, self.ts, self.ordinal):
                row = (P[ds.link_a[i]], P[ds.link_b[i]], P[a], str(t), str(o))
                fh.write(delimiter.join(row) + "\n")


def _link_gaps(dataset: Dataset):
    """Gap to the previous event on the same link, NaN-free; first-of-link flagged."""
    n = dataset.n_events
    first = np.ones(n, dtype=bool)
    gaps = np.zeros(n, dtype=np.int64)
    if n > 1:
        first[1:] = dataset.link[1:] != dataset.link[:-1]
        gaps[1:] = np.diff(dataset.ts)
    return first, gaps


def extract_initiatives(dataset: Dataset, threshold: float = DAY) -> Initiatives:
    """Keep events whose gap to the previous event on the link strictly exceeds ``threshold``.

    The first event of every link is an initiative. ``threshold`` is in seconds
    and may be ``math.inf``.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    first, gaps = _link_gaps(dataset)
    return Initiatives(dataset, first | (gaps > threshold), threshold)


@dataclass
class InterEventStats:
    gaps: np.ndarray
    fraction_below_threshold: Optional[float]
    threshold: float = DAY
    alpha: Optional[float] = None
    alpha_stderr: Optional[float] = None
    fit_range: tuple = (MINUTE, WEEK)


def interevent_gaps(dataset: Dataset, threshold: float = DAY) -> InterEventStats:
    """Pooled gaps between consecutive events on the same link.

    ``fraction_below_threshold`` is the share of gaps at or below the
    threshold (the follow-up share) and ``None`` when there are no gaps.
    """
    first, gaps = _link_gaps(dataset)
    pooled = np.sort(gaps[~first])
    frac = float(np.mean(pooled <= threshold)) if pooled.size else None
    return InterEventStats(pooled, frac, threshold)


# -- truncated continuous power law ---------------------------------------------
#
# With v = log(t / t_min) on [0, L], a density t^alpha becomes an exponential
# family in v with natural parameter beta = alpha + 1.

def _mean_v(beta, L):
    x = beta * L
    if abs(x) < 1e-4:
        return L / 2 + beta * L * L / 12 - beta ** 3 * L ** 4 / 720
    return L / 2 + (L / 2) / math.tanh(x / 2) - 1.0 / beta


def _var_v(beta, L):
    x = beta * L
    if abs(x) < 1e-3:
        return L * L / 12 - beta * beta * L ** 4 / 240
    h = x / 2
    if abs(h) > 350:
        return 1.0 / (beta * beta)
    return 1.0 / (beta * beta) - (L / 2) ** 2 / math.sinh(h) ** 2


def fit_power_law(gaps, t_min: float = MINUTE, t_max: float = WEEK, min_count: int = 100) -> float:
    """Maximum-likelihood exponent of ``p(t) ∝ t**alpha`` truncated to ``[t_min, t_max]``.

    Only gaps inside the range enter the fit. The exponent is returned with
    its sign, so a decaying law gives a negative value.
    """
    if not t_min > 0:
        raise ValueError("t_min must be positive")
    if not t_max > t_min:
        raise ValueError("t_max must exceed t_min")
    g = np.asarray(gaps, dtype=np.float64)
    g = g[(g >= t_min) & (g <= t_max)]
    if g.size < min_count:
        raise InsufficientDataError(f"{g.size} gaps in range, need at least {min_count}")
    v = np.log(g / t_min)
    if np.ptp(v) == 0.0:
        raise DegenerateInputError("all in-range gaps are equal")
    L = math.log(t_max / t_min)
    target = float(v.mean())

    def score(beta):
        return _mean_v(beta, L) - target

    lo, hi = -1.0, 1.0
    while score(lo) > 0:
        lo *= 2
        if lo < -1e6:
            raise DegenerateInputError("exponent diverges to -inf")
    while score(hi) < 0:
        hi *= 2
        if hi > 1e6:
            raise DegenerateInputError("exponent diverges to +inf")
    beta = brentq(score, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
    return beta - 1.0


def power_law_stderr(alpha: float, n: int, t_min: float = MINUTE, t_max: float = WEEK) -> float:
    """Asymptotic standard error of the exponent from the Fisher information."""
    return 1.0 / math.sqrt(n * _var_v(alpha + 1.0, math.log(t_max / t_min)))


def fit_interevent(stats: InterEventStats, t_min=MINUTE, t_max=WEEK) -> InterEventStats:
    g = stats.gaps
    n = int(np.count_nonzero((g >= t_min) & (g <= t_max)))
    alpha = fit_power_law(g, t_min, t_max)
    stats.alpha = alpha
    stats.alpha_stderr = power_law_stderr(alpha, n, t_min, t_max)
    stats.fit_range = (t_min, t_max)
    return stats


def log_binned_density(gaps, t_min=MINUTE, t_max=WEEK, bins_per_decade=10):
    """Log-binned gap density on ``[t_min, t_max]`` as ``(left, right, count, density)``."""
    decades = math.log10(t_max / t_min)
    edges = t_min * 10.0 ** (np.arange(int(math.ceil(decades * bins_per_decade)) + 1) / bins_per_decade)
    edges[-1] = t_max
    g = np.asarray(gaps, dtype=np.float64)
    counts, _ = np.histogram(g[(g >= t_min) & (g <= t_max)], bins=edges)
    total = max(int(np.asarray(gaps).size), 1)
    density = counts / (total * np.diff(edges))
    return edges[:-1], edges[1:], counts, density


def log_binned_slope(gaps, t_min=MINUTE, t_max=WEEK, bins_per_decade=10) -> float:
    """Least-squares slope of log density against log time; a diagnostic only."""
    left, right, counts, density = log_binned_density(gaps, t_min, t_max, bins_per_decade)
    ok = counts > 0
    if ok.sum() < 2:
        raise InsufficientDataError("fewer than two populated bins")
    centers = np.sqrt(left * right)
    slope, _ = np.polyfit(np.log(centers[ok]), np.log(density[ok]), 1)
    return float(slope)


# -- link counts ----------------------------------------------------------------

class LinkCounts(NamedTuple):
    link: LinkKey
    n_a: int
    n_b: int

    @property
    def total(self) -> int:
        return self.n_a + self.n_b


class CountTable:
    """Initiative counts ``(n_a, n_b)`` for a collection of links."""

    def __init__(self, links, n_a, n_b):
        self.links = list(links)
        self.n_a = np.asarray(n_a, dtype=np.int64)
        self.n_b = np.asarray(n_b, dtype=np.int64)
        if not (len(self.links) == self.n_a.shape[0] == self.n_b.shape[0]):
            raise ValueError("links and counts differ in length")
        if (self.n_a < 0).any() or (self.n_b < 0).any():
            raise ValueError("negative counts")

    @property
    def total(self) -> np.ndarray:
        return self.n_a + self.n_b

    def __len__(self):
        return len(self.links)

    def __iter__(self):
        for key, a, b in zip(self.links, self.n_a, self.n_b):
            yield LinkCounts(key, int(a), int(b))

    def select(self, mask) -> "CountTable":
        mask = np.asarray(mask, dtype=bool)
        return CountTable([k for k, m in zip(self.links, mask) if m], self.n_a[mask], self.n_b[mask])

    def reciprocal(self) -> "CountTable":
        """Links with at least one initiative in each direction."""
        return self.select((self.n_a > 0) & (self.n_b > 0))

    def write(self, path, delimiter="\t"):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(delimiter.join(("a", "b", "n_a", "n_b")) + "\n")
            for (a, b), x, y in zip(self.links, self.n_a, self.n_b):
                fh.write(f"{a}{delimiter}{b}{delimiter}{x}{delimiter}{y}\n")

    @classmethod
    def read(cls, path, delimiter="\t") -> "CountTable":
        links, na, nb = [], [], []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split(delimiter)
            if header != ["a", "b", "n_a", "n_b"]:
                raise InputError(f"unexpected count-table header {header}")
            for line_no, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split(delimiter)
                try:
                    a, b, x, y = parts
                    links.append(LinkKey(a, b))
                    na.append(int(x))
                    nb.append(int(y))
                except ValueError:
                    raise InputError(f"line {line_no}: malformed count row") from None
        return cls(links, na, nb)


def link_counts(initiatives: Initiatives) -> CountTable:
    """Per-link initiative counts by endpoint; links without initiatives are omitted."""
    ds = initiatives.dataset
    M = ds.n_links
    n_b = np.bincount(initiatives.link, weights=initiatives.side, minlength=M).astype(np.int64)
    total = np.bincount(initiatives.link, minlength=M).astype(np.int64)
    keep = np.flatnonzero(total > 0)
    return CountTable([ds.link_key(i) for i in keep], (total - n_b)[keep], n_b[keep])
