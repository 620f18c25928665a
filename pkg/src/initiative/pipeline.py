"""End-to-end batch pipeline with a run manifest."""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
import traceback
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from typing import Optional

import numpy as np

from . import __version__, _backend
from .dynamics import (
    detect_discontinuations,
    ending_probability_curve,
    fit_exponential,
    sequences_from_initiatives,
    turn_probability_curve,
)
from .errors import InitiativeError, InputError, NumericalError
from .events import ingest_events, ingest_traits
from .initiatives import (
    CountTable,
    extract_initiatives,
    fit_interevent,
    interevent_gaps,
    link_counts,
    log_binned_density,
    log_binned_slope,
)
from .mixture import (
    EstimatorOptions,
    MixtureDistribution,
    estimate_link_mixture,
    estimate_person_mixture,
    make_grid,
)
from .persons import (
    binned_means,
    pearson_with_bootstrap,
    person_initiative_ratio,
    trait_correlations,
    with_friend_abundance,
)
from .synthetic import ReplicaPlan, bootstrap_validate, distribution_spread, generate_replica

OUT_DIR_ENV = "INITIATIVE_OUT"
STAGES = ("ingest", "extract", "estimate", "bootstrap", "dynamics", "persons")
ARTIFACTS = {
    "extract": ["interevent.tsv"],
    "estimate": ["link_mixture.tsv", "person_mixture.tsv"],
    "dynamics": ["turn_curve.tsv", "ending_curve.tsv"],
    "persons": ["persons.tsv"],
}


def fixture_paths():
    """Paths of the bundled synthetic event and trait files."""
    base = resources.files("initiative") / "data"
    return str(base / "fixture_events.tsv"), str(base / "fixture_traits.tsv")


@dataclass
class RunConfig:
    events: Optional[str] = None
    traits: Optional[str] = None
    counts: Optional[str] = None
    distribution: Optional[str] = None
    out_dir: str = field(default_factory=lambda: os.environ.get(OUT_DIR_ENV, "initiative-out"))
    delimiter: str = "\t"
    lenient: bool = False
    threshold_hours: float = 24.0
    fit_t_min: float = 60.0
    fit_t_max: float = 604800.0
    grid_size: int = 51
    tol: float = 1e-8
    max_iter: int = 10000
    min_initiatives: int = 1
    reciprocal_only: bool = False
    normal_approx: bool = False
    replicas: int = 100
    seed: int = 0
    export_replicas: bool = False
    ghost_factor: float = 10.0
    dynamics_min_initiatives: int = 15
    min_curve_obs: int = 30
    window_size: int = 20
    disjoint_windows: bool = False
    min_person_initiatives: int = 200
    bootstrap_rounds: int = 1000
    abundance_bins: int = 10
    skip: tuple = ()
    write_intermediate: bool = False
    threads: int = 1

    def options(self) -> EstimatorOptions:
        return EstimatorOptions(
            max_iter=self.max_iter, tol=self.tol, min_total=self.min_initiatives,
            normal_approx=self.normal_approx,
        )

    def as_dict(self):
        d = asdict(self)
        d["skip"] = sorted(self.skip)
        return d


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class StageFailed(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage} failed: {exc}")
        self.stage = stage
        self.exc = exc


class Pipeline:
    """Runs the selected stages in order, keeping intermediate results on ``self``."""

    def __init__(self, config: RunConfig, stages=STAGES):
        self.config = config
        self.stages = [s for s in STAGES if s in stages and s not in config.skip]
        self.report = {"tool": {"name": "initiative", "version": __version__}}
        self.timings = []
        self.artifacts = []
        self.dataset = None
        self.initiatives = None
        self.counts = None
        self.link_dist = None
        self.person_dist = None
        self.person_totals = None
        self.traits = None

    def path(self, name):
        return os.path.join(self.config.out_dir, name)

    def emit(self, name):
        self.artifacts.append(name)
        return self.path(name)

    def run(self):
        os.makedirs(self.config.out_dir, exist_ok=True)
        for stage in STAGES:
            if stage in self.config.skip:
                self.report.setdefault(stage, {"skipped": True})
            if stage not in self.stages:
                continue
            t0 = time.perf_counter()
            try:
                getattr(self, f"stage_{stage}")()
            except Exception as exc:
                self.timings.append({"stage": stage, "status": "failed", "seconds": time.perf_counter() - t0})
                raise StageFailed(stage, exc) from exc
            self.timings.append({"stage": stage, "status": "ok", "seconds": time.perf_counter() - t0})
        write_json(self.emit("report.json"), self.report)

    # -- stages ---------------------------------------------------------------

    def stage_ingest(self):
        cfg = self.config
        if cfg.events is None:
            if cfg.counts is None:
                raise InputError("no event file or count table given")
            self.counts = CountTable.read(cfg.counts, cfg.delimiter)
            self.report["ingest"] = {"counts": cfg.counts, "links": len(self.counts)}
            return
        self.dataset = ingest_events(cfg.events, cfg.delimiter, strict=not cfg.lenient)
        info = self.dataset.report.as_dict()
        info.update(events=self.dataset.n_events, links=self.dataset.n_links, persons=self.dataset.n_persons)
        if cfg.traits:
            self.traits = ingest_traits(cfg.traits, cfg.delimiter)
            info["trait_records"] = len(self.traits)
        self.report["ingest"] = info

    def stage_extract(self):
        if self.dataset is None:
            return
        cfg = self.config
        threshold = cfg.threshold_hours * 3600.0
        self.initiatives = extract_initiatives(self.dataset, threshold)
        self.counts = link_counts(self.initiatives)
        stats = interevent_gaps(self.dataset, threshold)
        info = {
            "threshold_seconds": threshold,
            "initiatives": len(self.initiatives),
            "followups": self.initiatives.n_followups,
            "gaps": int(stats.gaps.size),
            "fraction_below_threshold": stats.fraction_below_threshold,
            "fit_range": [cfg.fit_t_min, cfg.fit_t_max],
        }
        try:
            fit_interevent(stats, cfg.fit_t_min, cfg.fit_t_max)
            info["alpha"] = stats.alpha
            info["alpha_stderr"] = stats.alpha_stderr
            info["log_binned_slope"] = log_binned_slope(stats.gaps, cfg.fit_t_min, cfg.fit_t_max)
        except NumericalError as exc:
            info["alpha"] = None
            info["alpha_error"] = str(exc)
        self.report["interevent"] = info
        if cfg.write_intermediate:
            self.initiatives.write(self.emit("initiatives.tsv"))
            self.counts.write(self.emit("link_counts.tsv"))
        left, right, count, density = log_binned_density(stats.gaps, cfg.fit_t_min, cfg.fit_t_max)
        with open(self.emit("interevent.tsv"), "w", encoding="utf-8", newline="") as fh:
            fh.write("left\tright\tcount\tdensity\n")
            for l_, r_, c_, d_ in zip(left, right, count, density):
                fh.write(f"{float(l_)!r}\t{float(r_)!r}\t{int(c_)}\t{float(d_)!r}\n")

    def stage_estimate(self):
        cfg = self.config
        opts = cfg.options()
        counts = self.counts.reciprocal() if cfg.reciprocal_only else self.counts
        self.link_dist, rep = estimate_link_mixture(counts.n_a, counts.n_b, make_grid(cfg.grid_size, 0.5), opts)
        self.link_dist.write(self.emit("link_mixture.tsv"))
        info = rep.as_dict()
        info["reciprocal_only"] = cfg.reciprocal_only
        info["spread"] = distribution_spread(self.link_dist)
        self.report["link_mixture"] = info
        if self.initiatives is not None:
            table = person_initiative_ratio(self.initiatives, cfg.min_person_initiatives)
            self.person_totals = (table.outgoing, table.total)
            self.person_dist, prep = estimate_person_mixture(
                table.outgoing, table.total, make_grid(cfg.grid_size, 1.0), opts
            )
            self.person_dist.write(self.emit("person_mixture.tsv"))
            pinfo = prep.as_dict()
            pinfo["spread"] = distribution_spread(self.person_dist)
            self.report["person_mixture"] = pinfo

    def stage_bootstrap(self):
        cfg = self.config
        opts = cfg.options()
        if self.link_dist is None:
            if cfg.distribution is None:
                raise InputError("bootstrap needs a fitted distribution")
            self.link_dist = MixtureDistribution.read(cfg.distribution, cfg.delimiter)
        counts = self.counts.reciprocal() if cfg.reciprocal_only else self.counts
        link_sizes = counts.total[counts.total >= max(cfg.min_initiatives, 1)]
        out = {"link": bootstrap_validate(self.link_dist, link_sizes, cfg.replicas, cfg.seed, opts).as_dict()}
        if self.person_dist is not None:
            _, total = self.person_totals
            sizes = total[total >= max(cfg.min_initiatives, 1)]
            prep = bootstrap_validate(self.person_dist, sizes, cfg.replicas, cfg.seed + 1, opts, folded=False)
            out["person"] = prep.as_dict()
        if cfg.export_replicas:
            plan = ReplicaPlan(self.link_dist, link_sizes, cfg.replicas, cfg.seed)
            for r in range(cfg.replicas):
                generate_replica(plan, r).write(self.emit(f"replica_{r:03d}.tsv"))
        self.report["bootstrap"] = out

    def stage_dynamics(self):
        cfg = self.config
        if self.initiatives is None:
            raise InputError("dynamics needs an event file")
        seqs = sequences_from_initiatives(self.initiatives)
        curve = turn_probability_curve(seqs)
        curve.truncated(cfg.min_curve_obs).write(self.emit("turn_curve.tsv"))
        info = {"turn_curve_points": int(curve.x.size)}
        try:
            fit = fit_exponential(curve, cfg.min_curve_obs)
            info["turn_fit"] = asdict(fit)
        except NumericalError as exc:
            info["turn_fit"] = None
            info["turn_fit_error"] = str(exc)
        rep = detect_discontinuations(self.initiatives, cfg.ghost_factor, cfg.dynamics_min_initiatives)
        info["discontinuation"] = {
            "factor": cfg.ghost_factor,
            "min_initiatives": cfg.dynamics_min_initiatives,
            "eligible_links": int(rep.eligible.sum()),
            "flagged_links": int(rep.flagged.sum()),
            "trigger_counts": {t: rep.trigger.count(t) for t in ("a", "b", "both")},
        }
        ending = ending_probability_curve(rep, seqs)
        ending.write(self.emit("ending_curve.tsv"))
        info["ending_curve_empty"] = ending.empty
        info["mean_final_run"] = ending.mean_final_run
        self.report["dynamics"] = info

    def stage_persons(self):
        cfg = self.config
        if self.initiatives is None:
            raise InputError("person metrics need an event file")
        table = person_initiative_ratio(self.initiatives, cfg.min_person_initiatives)
        stride = cfg.window_size if cfg.disjoint_windows else 1
        table = with_friend_abundance(table, self.initiatives, cfg.window_size, stride)
        table.write(self.emit("persons.tsv"))
        info = {
            "persons": len(table),
            "eligible": int(table.eligible.sum()),
            "window_size": cfg.window_size,
            "stride": stride,
        }
        use = table.eligible & ~np.isnan(table.friend_abundance)
        if use.sum() >= 3:
            try:
                c = pearson_with_bootstrap(
                    table.mu_p[use], table.friend_abundance[use], cfg.bootstrap_rounds, cfg.seed
                )
                info["abundance_correlation"] = asdict(c)
            except NumericalError as exc:
                info["abundance_correlation"] = None
                info["abundance_correlation_error"] = str(exc)
            bm = binned_means(table.mu_p[use], table.friend_abundance[use], cfg.abundance_bins)
            info["abundance_bins"] = {"centers": bm.centers, "means": bm.means, "counts": bm.counts}
        else:
            info["abundance_correlation"] = None
        if self.traits is not None:
            tc = trait_correlations(table, self.traits, cfg.bootstrap_rounds, cfg.seed)
            info["trait_correlations"] = {t: asdict(r) for t, r in tc.results.items()}
            info["trait_join_size"] = tc.n_joined
        self.report["persons"] = info


def run_pipeline(config: RunConfig, stages=STAGES) -> int:
    """Run ``stages`` and always write ``manifest.json``; returns a process exit code.

    0 on success, 3 for input errors, 4 for numerical failures, 1 otherwise.
    """
    _backend.set_threads(config.threads)
    os.makedirs(config.out_dir, exist_ok=True)
    pipe = Pipeline(config, stages)
    manifest = {
        "tool": {"name": "initiative", "version": __version__, "backend": _backend.BACKEND},
        "config": config.as_dict(),
        "inputs": {},
        "status": "running",
    }
    code = 0
    try:
        for p in (config.events, config.traits, config.counts, config.distribution):
            if p:
                try:
                    manifest["inputs"][p] = _sha256(p)
                except OSError as exc:
                    pipe.timings.append({"stage": "ingest", "status": "failed", "seconds": 0.0})
                    raise StageFailed("ingest", InputError(f"cannot read {p}: {exc}")) from exc
        pipe.run()
        manifest["status"] = "ok"
    except StageFailed as failure:
        manifest["status"] = "failed"
        manifest["failed_stage"] = failure.stage
        manifest["error"] = f"{type(failure.exc).__name__}: {failure.exc}"
        if isinstance(failure.exc, InputError):
            code = 3
        elif isinstance(failure.exc, (NumericalError, FloatingPointError)):
            code = 4
        else:
            manifest["traceback"] = "".join(traceback.format_exception(failure.exc))
            code = 1
    finally:
        manifest["stages"] = pipe.timings
        manifest["artifacts"] = pipe.artifacts + ["manifest.json"]
        manifest["checksums"] = {name: _sha256(pipe.path(name)) for name in pipe.artifacts}
        write_json(os.path.join(config.out_dir, "manifest.json"), manifest)
    return code


def config_fields():
    return [f.name for f in fields(RunConfig)]
