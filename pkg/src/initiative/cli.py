"""Command-line entry point: ``initiative <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .pipeline import STAGES, RunConfig, fixture_paths, run_pipeline

SUBCOMMAND_STAGES = {
    "ingest": ("ingest",),
    "extract": ("ingest", "extract"),
    "estimate": ("ingest", "extract", "estimate"),
    "simulate": ("ingest", "extract", "estimate", "bootstrap"),
    "dynamics": ("ingest", "extract", "dynamics"),
    "persons": ("ingest", "extract", "persons"),
    "run": STAGES,
}


def _common(p, events=True):
    if events:
        p.add_argument("events", nargs="?", help="event file with header ts, from, to, channel")
        p.add_argument("--fixture", action="store_true", help="use the bundled synthetic event and trait files")
        p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
        p.add_argument("--threshold-hours", type=float, default=24.0)
    p.add_argument("--out", default=None, help="output directory (default $INITIATIVE_OUT or ./initiative-out)")
    p.add_argument("--delimiter", default="\t")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def _mixture(p):
    p.add_argument("--grid-size", type=int, default=51)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--reciprocal-only", action="store_true")
    p.add_argument("--normal-approx", action="store_true")
    p.add_argument("--min-person-initiatives", type=int, default=200)


def _dynamics(p):
    p.add_argument("--ghost-factor", type=float, default=10.0)
    p.add_argument("--min-curve-obs", type=int, default=30)


def _persons(p):
    p.add_argument("--traits", default=None, help="Big Five trait table")
    p.add_argument("--window-size", type=int, default=20)
    p.add_argument("--disjoint-windows", action="store_true")
    p.add_argument("--min-person-initiatives", type=int, default=200)
    p.add_argument("--bootstrap-rounds", type=int, default=1000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="initiative", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate an event file and report row counts")
    _common(p)
    p.add_argument("--traits", default=None)

    p = sub.add_parser("extract", help="extract initiatives, link counts and inter-event gaps")
    _common(p)

    p = sub.add_parser("estimate", help="fit link and person initiative distributions")
    _common(p)
    p.add_argument("--counts", default=None, help="link count table (a, b, n_a, n_b) instead of events")
    p.add_argument("--min-initiatives", type=int, default=1, help="drop links with fewer initiatives")
    _mixture(p)

    p = sub.add_parser("simulate", help="bootstrap a fitted distribution with synthetic replicas")
    _common(p)
    p.add_argument("--counts", default=None)
    p.add_argument("--distribution", default=None, help="fitted distribution (mu, weight); refit if omitted")
    p.add_argument("--min-initiatives", type=int, default=1)
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--export-replicas", action="store_true", help="write each replica's count table")
    _mixture(p)

    p = sub.add_parser("dynamics", help="turn-probability and relationship-ending curves")
    _common(p)
    p.add_argument("--min-initiatives", type=int, default=15, help="links needed for the discontinuation rule")
    _dynamics(p)

    p = sub.add_parser("persons", help="per-person ratios, friend abundance and trait correlations")
    _common(p)
    _persons(p)

    p = sub.add_parser("report", help="print a summary of a finished run directory")
    p.add_argument("directory")

    p = sub.add_parser("run", help="full pipeline")
    _common(p)
    p.add_argument("--min-initiatives", type=int, default=1, help="mixture estimator link filter")
    p.add_argument("--dynamics-min-initiatives", type=int, default=15)
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--grid-size", type=int, default=51)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--reciprocal-only", action="store_true")
    p.add_argument("--normal-approx", action="store_true")
    _dynamics(p)
    _persons(p)
    for stage in ("estimate", "bootstrap", "dynamics", "persons"):
        p.add_argument(f"--skip-{stage}", action="store_true")
    return parser


def config_from_args(args) -> RunConfig:
    kw = {}
    simple = {
        "traits": "traits", "counts": "counts", "distribution": "distribution",
        "delimiter": "delimiter", "lenient": "lenient", "threshold_hours": "threshold_hours",
        "grid_size": "grid_size", "tol": "tol", "max_iter": "max_iter",
        "reciprocal_only": "reciprocal_only", "normal_approx": "normal_approx",
        "replicas": "replicas", "seed": "seed", "export_replicas": "export_replicas",
        "ghost_factor": "ghost_factor", "min_curve_obs": "min_curve_obs",
        "window_size": "window_size", "disjoint_windows": "disjoint_windows",
        "min_person_initiatives": "min_person_initiatives",
        "bootstrap_rounds": "bootstrap_rounds", "threads": "threads",
        "dynamics_min_initiatives": "dynamics_min_initiatives",
    }
    for attr, key in simple.items():
        if getattr(args, attr, None) is not None:
            kw[key] = getattr(args, attr)
    if args.command == "dynamics":
        kw["dynamics_min_initiatives"] = args.min_initiatives
    elif getattr(args, "min_initiatives", None) is not None:
        kw["min_initiatives"] = args.min_initiatives
    events = getattr(args, "events", None)
    if getattr(args, "fixture", False):
        fx_events, fx_traits = fixture_paths()
        events = events or fx_events
        if "traits" not in kw and args.command in ("run", "persons", "ingest"):
            kw["traits"] = fx_traits
    kw["events"] = events
    if args.out is not None:
        kw["out_dir"] = args.out
    kw["skip"] = tuple(s for s in STAGES if getattr(args, f"skip_{s}", False))
    if args.command == "simulate" and kw.get("distribution"):
        kw["skip"] = kw["skip"] + ("estimate",)
    kw["write_intermediate"] = args.command == "extract"
    return RunConfig(**kw)


def _print_report(directory) -> int:
    path = os.path.join(directory, "report.json")
    try:
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
    except OSError as exc:
        print(f"initiative: cannot read {path}: {exc}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"initiative: {path} is not valid JSON: {exc}", file=sys.stderr)
        return 3
    lines = []
    ing = report.get("ingest", {})
    if "events" in ing:
        lines.append(f"events {ing['events']}  links {ing['links']}  persons {ing['persons']}")
    ie = report.get("interevent")
    if ie:
        lines.append(f"initiatives {ie['initiatives']}  followups {ie['followups']}")
        frac = ie.get("fraction_below_threshold")
        if frac is not None:
            alpha = ie.get("alpha")
            alpha_text = "n/a" if alpha is None else f"{alpha:.4f}"
            lines.append(f"gaps below threshold {frac:.3f}  power-law exponent {alpha_text}")
    for key in ("link_mixture", "person_mixture"):
        mix = report.get(key)
        if mix:
            s = mix["summary"]
            lines.append(
                f"{key.replace('_', ' ')}: mean {s['mean']:.4f}  zero weight {s['zero_weight']:.4f}"
                f"  converged {mix['converged']}"
            )
    boot = report.get("bootstrap", {})
    for key, b in boot.items():
        if isinstance(b, dict) and "mean_mu" in b:
            lines.append(f"bootstrap {key}: biased {b['biased']}  mean spread {b['mean_mu']['spread']:.4f}")
    dyn = report.get("dynamics", {})
    if dyn.get("turn_fit"):
        f = dyn["turn_fit"]
        lines.append(f"turn probability a={f['a']:.3f} b={f['b']:.3f}")
    if "discontinuation" in dyn:
        d = dyn["discontinuation"]
        lines.append(f"discontinued links {d['flagged_links']} of {d['eligible_links']} eligible")
    per = report.get("persons", {})
    if per.get("abundance_correlation"):
        c = per["abundance_correlation"]
        lines.append(f"friend abundance r={c['r']:.3f} +/- {c['stderr']:.3f} (n={c['n']})")
    for trait, c in per.get("trait_correlations", {}).items():
        lines.append(f"{trait} r={c['r']:.3f} +/- {c['stderr']:.3f}")
    print("\n".join(lines))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return _print_report(args.directory)
    config = config_from_args(args)
    if config.events is None and config.counts is None:
        print("initiative: an event file (or --fixture) is required", file=sys.stderr)
        return 2
    code = run_pipeline(config, SUBCOMMAND_STAGES[args.command])
    with open(os.path.join(config.out_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if code:
        print(f"initiative: {manifest.get('failed_stage')} failed: {manifest.get('error')}", file=sys.stderr)
    else:
        print(f"wrote {', '.join(manifest['artifacts'])} to {config.out_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
