"""Synthetic data: parametric replicas, feedback-driven sequences, populations.

Every generator takes an integer seed; independent streams are derived from
``(seed, stream index)`` through a Philox counter-based generator, so replica
``r`` never depends on how many draws replicas before it consumed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .dynamics import InitiativeSequence
from .errors import NumericalError
from .events import TRAITS, Dataset, LinkKey, TraitRecord
from .initiatives import DAY, CountTable
from .mixture import (
    EstimatorOptions,
    MixtureDistribution,
    estimate_link_mixture,
    estimate_person_mixture,
    summarize_mixture,
)


def stream(seed: int, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, index)])))


# -- parametric replicas --------------------------------------------------------

@dataclass
class ReplicaPlan:
    source: MixtureDistribution
    sizes: np.ndarray
    replicas: int = 100
    seed: int = 0
    links: Optional[list] = None
    folded: bool = True

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        if self.replicas < 1:
            raise ValueError("replica count must be at least 1")
        if self.sizes.size == 0 or (self.sizes < 1).any():
            raise ValueError("every link size must be at least 1")
        if self.links is not None and len(self.links) != self.sizes.size:
            raise ValueError("links and sizes differ in length")


def _synthetic_links(n):
    width = len(str(max(n - 1, 0)))
    return [LinkKey(f"s{i:0{width}d}a", f"s{i:0{width}d}b") for i in range(n)]


def generate_replica(plan: ReplicaPlan, r: int) -> CountTable:
    """One synthetic count table with the source's link sizes.

    Each link draws ``mu`` from the source distribution and
    ``n ~ Binomial(N, mu)``. For folded (link) sources the ``n`` initiatives
    go to a uniformly chosen endpoint; otherwise ``n`` is endpoint ``a``'s.
    """
    rng = stream(plan.seed, r)
    m = plan.sizes.size
    mu = plan.source.grid[rng.choice(plan.source.grid.size, size=m, p=plan.source.weights)]
    n = rng.binomial(plan.sizes, mu)
    if plan.folded:
        flip = rng.random(m) < 0.5
        n_a = np.where(flip, plan.sizes - n, n)
    else:
        n_a = n
    links = plan.links if plan.links is not None else _synthetic_links(m)
    return CountTable(links, n_a, plan.sizes - n_a)


@dataclass
class BootstrapReport:
    grid: np.ndarray
    source: np.ndarray
    bin_mean: np.ndarray
    bin_std: np.ndarray
    biased_bins: np.ndarray
    replica_means: np.ndarray
    replica_means_excl_zero: np.ndarray
    replica_zero_weight: np.ndarray
    replica_spread: np.ndarray
    failed: list = field(default_factory=list)
    unconverged: list = field(default_factory=list)

    @property
    def biased(self) -> bool:
        return bool(self.biased_bins.any())

    @property
    def mean_mu_spread(self) -> float:
        return float(np.std(self.replica_means, ddof=1))

    @property
    def mean_mu_stderr(self) -> float:
        return self.mean_mu_spread / math.sqrt(self.replica_means.size)

    def as_dict(self):
        def stat(v):
            v = np.asarray([x for x in v if x is not None and np.isfinite(x)], dtype=np.float64)
            if v.size < 2:
                return {"mean": float(v.mean()) if v.size else None, "spread": None, "stderr": None}
            sd = float(np.std(v, ddof=1))
            return {"mean": float(v.mean()), "spread": sd, "stderr": sd / math.sqrt(v.size)}

        return {
            "replicas": int(self.replica_means.size),
            "failed": self.failed,
            "unconverged": self.unconverged,
            "biased": self.biased,
            "biased_bins": [float(g) for g in self.grid[self.biased_bins]],
            "mean_mu": stat(self.replica_means),
            "mean_mu_excluding_zero": stat(self.replica_means_excl_zero),
            "zero_weight": stat(self.replica_zero_weight),
            "distribution_spread": stat(self.replica_spread),
            "grid": self.grid.tolist(),
            "source_weight": self.source.tolist(),
            "bin_mean": self.bin_mean.tolist(),
            "bin_std": self.bin_std.tolist(),
        }


def distribution_spread(dist: MixtureDistribution) -> float:
    return math.sqrt(float(dist.weights @ (dist.grid - dist.mean) ** 2))


BIAS_FLOOR = 1e-12


def bootstrap_validate(
    fitted: MixtureDistribution,
    sizes,
    replicas: int = 100,
    seed: int = 0,
    opts: EstimatorOptions | None = None,
    folded: bool = True,
) -> BootstrapReport:
    """Re-simulate from ``fitted`` and re-estimate, ``replicas`` times.

    A bin is flagged biased when the replica mean differs from the fitted
    weight by more than twice the replica standard deviation (plus a 1e-12
    floor so rounding noise in zero-spread bins is not flagged).
    """
    if replicas < 2:
        raise ValueError("bootstrap needs at least two replicas")
    plan = ReplicaPlan(fitted, sizes, replicas, seed, folded=folded)
    estimate = estimate_link_mixture if folded else estimate_person_mixture
    rows, failed, unconverged = [], [], []
    for r in range(replicas):
        table = generate_replica(plan, r)
        try:
            if folded:
                dist, rep = estimate(table.n_a, table.n_b, fitted.grid, opts)
            else:
                dist, rep = estimate(table.n_a, table.total, fitted.grid, opts)
        except NumericalError:
            failed.append(r)
            continue
        if not rep.converged:
            unconverged.append(r)
        rows.append(dist)
    if len(failed) >= 0.2 * replicas:
        raise NumericalError(f"{len(failed)} of {replicas} bootstrap replicas failed")
    W = np.array([d.weights for d in rows])
    bin_mean = W.mean(axis=0)
    bin_std = W.std(axis=0, ddof=1)
    summaries = [summarize_mixture(d) for d in rows]
    return BootstrapReport(
        grid=fitted.grid,
        source=fitted.weights,
        bin_mean=bin_mean,
        bin_std=bin_std,
        biased_bins=np.abs(bin_mean - fitted.weights) > 2.0 * bin_std + BIAS_FLOOR,
        replica_means=np.array([s.mean for s in summaries]),
        replica_means_excl_zero=np.array(
            [np.nan if s.mean_excluding_zero is None else s.mean_excluding_zero for s in summaries]
        ),
        replica_zero_weight=np.array([s.zero_weight for s in summaries]),
        replica_spread=np.array([distribution_spread(d) for d in rows]),
        failed=failed,
        unconverged=unconverged,
    )


# -- feedback-driven sequences --------------------------------------------------

def run_length_cdf(a: float, b: float, max_len: int) -> np.ndarray:
    """``cdf[x-1] = P(run length <= x)`` when a run of length x switches with probability ``a*b**x``."""
    x = np.arange(1, max_len + 1, dtype=np.float64)
    stay = 1.0 - a * b ** x
    return 1.0 - np.cumprod(stay)


def _check_feedback(a, b):
    if not (0 < a <= 1 and 0 < b <= 1):
        raise ValueError("need 0 < a <= 1 and 0 < b <= 1")
    if a * b > 1:
        raise ValueError("a*b exceeds 1, not a probability")


def generate_feedback_sequences(
    a: float, b: float, total_initiatives: int, seed: int = 0, sequence_length: int | None = 100
) -> list:
    """Actor sequences where a run of length ``x`` switches actor with probability ``a * b**x``.

    ``total_initiatives`` are split into sequences of ``sequence_length``
    (one sequence when ``None``); each starts with a uniformly random actor.
    For ``b < 1`` the switch hazard is summable, so one very long sequence
    eventually locks into a single endless run; keep sequences short.
    """
    _check_feedback(a, b)
    if total_initiatives < 1:
        raise ValueError("need at least one initiative")
    if sequence_length is not None and sequence_length < 1:
        raise ValueError("sequence_length must be positive")
    L = total_initiatives if sequence_length is None else min(int(sequence_length), total_initiatives)
    S = max(total_initiatives // L, 1)
    rng = stream(seed, 0)
    first = rng.integers(0, 2, size=S).astype(np.int8)
    uniforms = rng.random((S, L))
    flat = kernels.feedback_actors(uniforms, first, run_length_cdf(a, b, L), L)
    links = _synthetic_links(S)
    ts = np.arange(L, dtype=np.int64) * 2 * DAY
    return [InitiativeSequence(links[s], flat[s * L:(s + 1) * L], ts) for s in range(S)]


def sample_truncated_power_law(alpha, t_min, t_max, size, rng) -> np.ndarray:
    """Inverse-CDF draws from ``p(t) ∝ t**alpha`` on ``[t_min, t_max]``."""
    u = rng.random(size)
    beta = alpha + 1.0
    if abs(beta) < 1e-12:
        return t_min * (t_max / t_min) ** u
    lo, hi = t_min ** beta, t_max ** beta
    return (lo + u * (hi - lo)) ** (1.0 / beta)


# -- whole populations ----------------------------------------------------------

@dataclass
class Population:
    dataset: Dataset
    ghosted: dict          # LinkKey -> length of the final one-sided run
    person_bias: dict      # person id -> latent propensity used for traits


def simulate_population(
    n_persons: int = 300,
    n_links: int = 2000,
    ghost_fraction: float = 0.2,
    a: float = 0.51,
    b: float = 0.92,
    mean_final_run: float = 3.2,
    horizon_days: int = 400,
    min_initiatives: int = 15,
    followup_prob: float = 0.6,
    seed: int = 0,
) -> Population:
    """A communication population with feedback-driven links, some of them abandoned.

    Links carry initiatives at least a day and an hour apart, each optionally
    followed by quick replies within the hour. Actors follow the feedback
    turn rule. A ``ghost_fraction`` of links stops in the first half of the
    horizon right after a one-sided run of length ``K``, with
    ``K - 1 ~ Poisson(mean_final_run - 1)``; both endpoints stay active on
    their other links.
    """
    _check_feedback(a, b)
    if n_links > n_persons * (n_persons - 1) // 2:
        raise ValueError("more links than person pairs")
    rng = stream(seed, 1)
    width = len(str(n_persons - 1))
    names = np.array([f"p{i:0{width}d}" for i in range(n_persons)])

    pairs = set()
    while len(pairs) < n_links:
        u, v = rng.integers(0, n_persons, size=2)
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    pairs = sorted(pairs)

    horizon = horizon_days * DAY
    spacing_floor = DAY + 3600 + 1
    ghost = rng.random(n_links) < ghost_fraction
    ts_all, snd_all, rcv_all, ch_all = [], [], [], []
    ghosted = {}

    for li, (u, v) in enumerate(pairs):
        mean_gap = rng.uniform(2.0, 12.0) * DAY
        start = rng.uniform(0, 10 * DAY)
        n_max = int((horizon - start) / (spacing_floor + mean_gap)) + 1
        gaps = spacing_floor + rng.exponential(mean_gap, size=4 * n_max + 8)
        times = start + np.concatenate([[0.0], np.cumsum(gaps)])
        times = times[times < horizon]
        m = times.size
        actors = kernels.feedback_actors(
            rng.random((1, m)), rng.integers(0, 2, size=1).astype(np.int8), run_length_cdf(a, b, m), m
        )
        k_final = 1 + int(rng.poisson(mean_final_run - 1.0))
        half = int(np.searchsorted(times, horizon / 2))
        stop = max(min_initiatives + k_final, min(half, m - 1))
        if ghost[li] and stop < m:
            rl = kernels.run_lengths(actors[:stop], np.array([0, stop], dtype=np.int64))
            hits = np.flatnonzero(rl[min_initiatives - 1:] == k_final)
            if hits.size:
                stop = min_initiatives - 1 + int(hits[0]) + 1
            else:
                # force a final run of exactly k_final
                actors[stop - k_final:stop] = actors[stop - 1]
                actors[stop - k_final - 1] = 1 - actors[stop - 1]
            times, actors = times[:stop], actors[:stop]
            ghosted[(u, v)] = k_final
        m = times.size
        snd = np.where(actors == 0, u, v)
        rcv = np.where(actors == 0, v, u)
        ts_all.append(times.astype(np.int64))
        snd_all.append(snd)
        rcv_all.append(rcv)
        ch_all.append(rng.integers(0, 2, size=m))
        # follow-ups: quick replies in either direction within the hour
        n_fu = rng.binomial(3, followup_prob, size=m)
        rep = np.repeat(np.arange(m), n_fu)
        if rep.size:
            fu_t = times[rep] + rng.uniform(60, 3600, size=rep.size)
            back = rng.random(rep.size) < 0.7
            ts_all.append(fu_t.astype(np.int64))
            snd_all.append(np.where(back, rcv[rep], snd[rep]))
            rcv_all.append(np.where(back, snd[rep], rcv[rep]))
            ch_all.append(rng.integers(0, 2, size=rep.size))

    ts = np.concatenate(ts_all)
    snd = np.concatenate(snd_all)
    rcv = np.concatenate(rcv_all)
    ch = np.concatenate(ch_all).astype(np.int8)
    ds = Dataset.from_arrays(ts, names[snd], names[rcv], ch)
    ghost_keys = {LinkKey(names[u], names[v]): k for (u, v), k in ghosted.items()}
    bias = {names[i]: float(x) for i, x in enumerate(rng.standard_normal(n_persons))}
    return Population(ds, ghost_keys, bias)


def simulate_traits(mu_p: dict, extraversion_rho: float = 0.3, seed: int = 0) -> dict:
    """Big Five scores on a 1-5 scale; extraversion correlates with ``mu_p``, the rest do not."""
    rng = stream(seed, 2)
    persons = sorted(mu_p)
    x = np.array([mu_p[p] for p in persons], dtype=np.float64)
    z = (x - x.mean()) / (x.std() or 1.0)
    out = {}
    noise = rng.standard_normal((len(persons), len(TRAITS)))
    for i, p in enumerate(persons):
        scores = {}
        for j, trait in enumerate(TRAITS):
            if trait == "extraversion":
                val = extraversion_rho * z[i] + math.sqrt(1 - extraversion_rho ** 2) * noise[i, j]
            else:
                val = noise[i, j]
            scores[trait] = round(3.0 + 0.6 * val, 4)
        out[p] = TraitRecord(p, **scores)
    return out
