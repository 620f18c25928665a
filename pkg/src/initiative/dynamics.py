"""Initiative-length dynamics: run lengths, turn probabilities, discontinuations."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import InsufficientDataError
from .events import LinkKey
from .initiatives import Initiatives


@dataclass
class InitiativeSequence:
    """Actors of consecutive initiatives on one link (0 = endpoint ``a``, 1 = ``b``)."""

    link: LinkKey
    actors: np.ndarray
    timestamps: Optional[np.ndarray] = None

    def __post_init__(self):
        self.actors = np.asarray(self.actors, dtype=np.int8)
        if self.actors.size == 0:
            raise ValueError("an initiative sequence needs at least one initiative")
        if ((self.actors != 0) & (self.actors != 1)).any():
            raise ValueError("actors must be endpoint codes 0 or 1")

    def __len__(self):
        return int(self.actors.shape[0])

    @classmethod
    def from_labels(cls, labels, link: LinkKey | None = None) -> "InitiativeSequence":
        """Build from arbitrary actor labels such as ``["B", "A", "A"]``."""
        labels = list(labels)
        uniq = sorted(set(labels))
        if len(uniq) > 2:
            raise ValueError("a link has only two endpoints")
        if link is None:
            link = LinkKey(str(uniq[0]), str(uniq[-1]) if len(uniq) > 1 else str(uniq[0]) + "'")
        return cls(link, np.array([uniq.index(v) for v in labels], dtype=np.int8))


def sequences_from_initiatives(initiatives: Initiatives) -> list:
    ds = initiatives.dataset
    off = initiatives.link_offsets
    out = []
    for i in range(ds.n_links):
        lo, hi = off[i], off[i + 1]
        if hi > lo:
            out.append(InitiativeSequence(ds.link_key(i), initiatives.side[lo:hi], initiatives.ts[lo:hi]))
    return out


def pack(seqs: Sequence[InitiativeSequence]):
    """Concatenate sequences into ``(actors, offsets)`` for the kernels."""
    lengths = np.fromiter((len(s) for s in seqs), dtype=np.int64, count=len(seqs))
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    actors = np.concatenate([s.actors for s in seqs]) if seqs else np.zeros(0, dtype=np.int8)
    return actors.astype(np.int8), offsets


def run_length_annotate(seq) -> np.ndarray:
    """Current initiative length at each position: consecutive same-actor initiatives ending there."""
    if not isinstance(seq, InitiativeSequence):
        seq = InitiativeSequence.from_labels(seq)
    return kernels.run_lengths(seq.actors, np.array([0, len(seq)], dtype=np.int64))


@dataclass
class TurnCurve:
    x: np.ndarray
    observations: np.ndarray
    turns: np.ndarray
    probability: np.ndarray

    def truncated(self, min_observations: int) -> "TurnCurve":
        """Drop points beyond the largest ``x`` still backed by ``min_observations``."""
        ok = np.flatnonzero(self.observations >= min_observations)
        stop = ok[-1] + 1 if ok.size else 0
        return TurnCurve(self.x[:stop], self.observations[:stop], self.turns[:stop], self.probability[:stop])

    def write(self, path, delimiter="\t"):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(delimiter.join(("x", "observations", "turns", "probability")) + "\n")
            for x, o, t, p in zip(self.x, self.observations, self.turns, self.probability):
                fh.write(f"{int(x)}{delimiter}{int(o)}{delimiter}{int(t)}{delimiter}{float(p)!r}\n")


def turn_probability_curve(seqs: Sequence[InitiativeSequence], min_length: int = 0) -> TurnCurve:
    """Share of initiatives at run length ``x`` whose successor comes from the other endpoint.

    Only initiatives that have a successor are observed. Sequences shorter
    than ``min_length`` are skipped.
    """
    seqs = [s for s in seqs if len(s) >= min_length]
    actors, offsets = pack(seqs)
    obs, turns = kernels.turn_counts(actors, offsets)
    x = np.arange(obs.shape[0])
    keep = (x >= 1) & (obs > 0)
    obs, turns, x = obs[keep], turns[keep], x[keep]
    return TurnCurve(x, obs, turns, turns / obs if obs.size else np.zeros(0))


@dataclass
class ExpFit:
    a: float
    b: float
    residual_norm: float
    lengths_used: list
    excluded_zero: list = field(default_factory=list)

    def predict(self, x):
        return self.a * self.b ** np.asarray(x, dtype=np.float64)


def fit_exponential(curve: TurnCurve, min_observations_per_point: int = 30) -> ExpFit:
    """Fit ``y = a * b**x`` by count-weighted least squares on ``log y``.

    Points with fewer observations than the threshold are ignored; points
    with ``y = 0`` are excluded and listed in ``excluded_zero``.
    """
    x = np.asarray(curve.x, dtype=np.float64)
    y = np.asarray(curve.probability, dtype=np.float64)
    w = np.asarray(curve.observations, dtype=np.float64)
    enough = w >= min_observations_per_point
    zero = enough & (y <= 0)
    use = enough & (y > 0)
    if use.sum() < 2:
        raise InsufficientDataError("fewer than two curve points qualify for the fit")
    sw = np.sqrt(w[use])
    design = np.stack([np.ones(use.sum()), x[use]], axis=1) * sw[:, None]
    coef, *_ = np.linalg.lstsq(design, np.log(y[use]) * sw, rcond=None)
    resid = design @ coef - np.log(y[use]) * sw
    return ExpFit(
        a=float(np.exp(coef[0])),
        b=float(np.exp(coef[1])),
        residual_norm=float(np.linalg.norm(resid)),
        lengths_used=[int(v) for v in x[use]],
        excluded_zero=[int(v) for v in x[zero]],
    )


# -- discontinuation ------------------------------------------------------------

@dataclass
class DiscontinuationReport:
    """Per-link outcome of the ghosting rule, aligned with ``links``.

    ``trigger`` is ``"a"``, ``"b"``, ``"both"`` or ``""``; ``final_run`` is the
    run length at the link's last initiative (0 for ineligible links).
    """

    links: list
    eligible: np.ndarray
    flagged: np.ndarray
    trigger: list
    final_run: np.ndarray
    since_last: np.ndarray      # (M, 2) outside initiatives since last contact, per endpoint
    mean_separation: np.ndarray  # (M, 2) mean outside initiatives per historical gap
    factor: float
    min_initiatives: int

    @property
    def mean_final_run(self) -> Optional[float]:
        if not self.flagged.any():
            return None
        return float(self.final_run[self.flagged].mean())

    def flagged_links(self) -> set:
        return {k for k, f in zip(self.links, self.flagged) if f}


def detect_discontinuations(
    initiatives: Initiatives, factor: float = 10.0, min_initiatives: int = 15, min_gaps: int = 3
) -> DiscontinuationReport:
    """Flag links that one endpoint appears to have abandoned.

    For each endpoint P of a link with at least ``min_initiatives``
    initiatives, count P's initiatives on other links inside every gap between
    consecutive events of the link (open intervals). The link is flagged when
    P's initiatives elsewhere since the link's last event exceed ``factor``
    times the mean of those per-gap counts, for either endpoint with at least
    ``min_gaps`` gaps.
    """
    ds = initiatives.dataset
    M = ds.n_links
    # each person's initiative times, sorted, as one flat array plus offsets
    order = np.lexsort((initiatives.ts, initiatives.actor))
    p_times = initiatives.ts[order]
    p_off = np.searchsorted(initiatives.actor[order], np.arange(ds.n_persons + 1))

    n_init = initiatives.per_link_counts()
    eligible = n_init >= min_initiatives
    flagged = np.zeros(M, dtype=bool)
    trigger = [""] * M
    final_run = np.zeros(M, dtype=np.int64)
    since = np.zeros((M, 2), dtype=np.int64)
    mean_sep = np.full((M, 2), np.nan)
    ends = (ds.link_a, ds.link_b)

    for i in np.flatnonzero(eligible):
        ev = ds.ts[ds.link_offsets[i]:ds.link_offsets[i + 1]]
        lo_i, hi_i = initiatives.link_offsets[i], initiatives.link_offsets[i + 1]
        final_run[i] = kernels.run_lengths(
            initiatives.side[lo_i:hi_i], np.array([0, hi_i - lo_i], dtype=np.int64)
        )[-1]
        fired = []
        for e in (0, 1):
            p = ends[e][i]
            times = p_times[p_off[p]:p_off[p + 1]]
            if ev.size - 1 < min_gaps:
                continue
            seps = np.searchsorted(times, ev[1:], "left") - np.searchsorted(times, ev[:-1], "right")
            mean_sep[i, e] = seps.mean()
            since[i, e] = times.size - np.searchsorted(times, ev[-1], "right")
            if since[i, e] > factor * mean_sep[i, e]:
                fired.append("ab"[e])
        if fired:
            flagged[i] = True
            trigger[i] = "both" if len(fired) == 2 else fired[0]

    return DiscontinuationReport(
        links=ds.links, eligible=eligible, flagged=flagged, trigger=trigger,
        final_run=final_run, since_last=since, mean_separation=mean_sep,
        factor=factor, min_initiatives=min_initiatives,
    )


@dataclass
class EndingCurve:
    x: np.ndarray
    runs_reaching: np.ndarray
    endings: np.ndarray
    probability: np.ndarray
    mean_final_run: Optional[float]

    @property
    def empty(self) -> bool:
        return self.mean_final_run is None

    def write(self, path, delimiter="\t"):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"x{delimiter}ending_probability\n")
            for x, p in zip(self.x, self.probability):
                fh.write(f"{int(x)}{delimiter}{float(p)!r}\n")


def ending_probability_curve(report: DiscontinuationReport, seqs: Sequence[InitiativeSequence]) -> EndingCurve:
    """Probability that a run of one-sided initiatives ends the relationship at length ``x``.

    Denominator: runs on eligible links that reach length ``x``. Numerator:
    flagged links whose final run has length exactly ``x``.
    """
    if report.min_initiatives < 15:
        raise ValueError("ending curve needs a report computed with min_initiatives >= 15")
    if not report.flagged.any():
        z = np.zeros(0, dtype=np.int64)
        return EndingCurve(z, z, z, np.zeros(0), None)
    by_link = {s.link: s for s in seqs}
    eligible = [k for k, e in zip(report.links, report.eligible) if e and k in by_link]
    chosen = [by_link[k] for k in eligible]
    actors, offsets = pack(chosen)
    rl = kernels.run_lengths(actors, offsets)
    # a run's length is the run length at its last position
    last = np.ones(rl.shape[0], dtype=bool)
    last[:-1] = rl[1:] <= rl[:-1]
    run_len = rl[last]
    top = int(max(run_len.max(), report.final_run[report.flagged].max()))
    hist = np.bincount(run_len, minlength=top + 1)
    reaching = np.cumsum(hist[::-1])[::-1]
    endings = np.bincount(report.final_run[report.flagged], minlength=top + 1)
    x = np.arange(1, top + 1)
    prob = np.divide(endings[1:], reaching[1:], out=np.zeros(top), where=reaching[1:] > 0)
    return EndingCurve(x, reaching[1:], endings[1:], prob, report.mean_final_run)
