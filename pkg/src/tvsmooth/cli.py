"""Command-line interface.

Every subcommand writes its results plus a ``run.json`` provenance record
into the ``--output`` directory. Outputs depend only on inputs and seed;
``--threads`` changes speed, never bytes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import cluster_trajectories, load_party_tsv, polarization_score, trajectory_dissimilarity, ward_cluster
from .core import (ParseError, SmoothConfig, TvSmoothError, load_prob_sequence,
                   load_snapshots, parse_times, save_prob_sequence, save_snapshots)
from .pipeline import EstimateRequest, empirical_sparsity, estimate, suggest_bandwidths
from .simgen import GeneratorSpec, MethodSpec, build_truth, default_methods, run_benchmark, sample
from .tuning import CvGrid, cross_validate

log = logging.getLogger("tvsmooth")


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run(out: Path, command: str, config: dict, seed=None, inputs=()) -> None:
    record = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {Path(p).name: _sha256(p) for p in inputs},
    }
    blob = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
    record["config_hash"] = hashlib.sha256(blob).hexdigest()
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "run.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _k_range(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --k-range {text!r}") from None


def _smooth_config(path) -> SmoothConfig:
    d = _read_json(path)
    if "best" in d:  # a cv report
        d = {**d["best"], "kernel": d.get("grid", {}).get("kernel", "tricube")}
    return SmoothConfig.from_dict(d)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_simulate(args) -> None:
    cfg = _read_json(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec = GeneratorSpec.from_dict(cfg)
    truth = build_truth(spec)
    data = sample(spec, truth, args.replicate, threads=args.threads)
    out = Path(args.output)
    save_snapshots(data, out / "snapshots.tsv")
    save_prob_sequence(truth.prob, out / "truth")
    with open(out / "calibration.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(truth.calibration, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run(out, "simulate", {**spec.to_dict(), "replicate": args.replicate}, spec.seed)


def cmd_cv(args) -> None:
    data = load_snapshots(args.input)
    grid = CvGrid.from_dict(_read_json(args.config)) if args.config else CvGrid.default(data.n, data.m)
    report = cross_validate(data, grid, threads=args.threads)
    out = Path(args.output)
    report.save(out / "cv_report.json")
    inputs = [args.input] + ([args.config] if args.config else [])
    _write_run(out, "cv", grid.to_dict(), None, inputs)
    ell, h1, h2 = report.best
    print(f"best: ell={ell} h1={h1:.6g} h2={h2:.6g} mean_error={min(report.mean_errors):.6g}")


def cmd_fit(args) -> None:
    data = load_snapshots(args.input)
    cfg = _smooth_config(args.config)
    if args.variant:
        cfg = cfg.replace(variant=args.variant)
    times = parse_times(args.times, data.grid)
    req = EstimateRequest(data, times, cfg)
    est = estimate(req, stage=args.stage, threads=args.threads)
    out = Path(args.output)
    save_prob_sequence(est, out)
    _write_run(out, "fit", {**cfg.to_dict(), "stage": args.stage, "times": [float(t) for t in times]},
               None, [args.input, args.config])


def cmd_benchmark(args) -> None:
    cfg = _read_json(args.config)
    gen = dict(cfg.get("generator", {}))
    if args.seed is not None:
        gen["seed"] = args.seed
    spec = GeneratorSpec.from_dict(gen)
    methods = ([MethodSpec.from_dict(m) for m in cfg["methods"]] if "methods" in cfg
               else default_methods())
    grid = CvGrid.from_dict(cfg["cv_grid"]) if "cv_grid" in cfg else None
    replicates = int(cfg.get("replicates", 1))
    res = run_benchmark(spec, methods, replicates, grid, threads=args.threads)
    out = Path(args.output)
    res.to_csv(out / "benchmark.csv")
    with open(out / "tuning.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(res.tuned, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run(out, "benchmark", {**cfg, "generator": spec.to_dict()}, spec.seed, [args.config])


def cmd_cluster(args) -> None:
    seq = load_prob_sequence(args.input)
    D = trajectory_dissimilarity(seq)
    res = ward_cluster(D, args.k_range)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "clusters.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(res.to_dict(seq.labels), fh, indent=2)
        fh.write("\n")
    curves = cluster_trajectories(seq, res.labels)
    with open(out / "curves.csv", "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"cluster_{c}" for c in curves])
        for k, t in enumerate(seq.times):
            w.writerow([f"{t:.10g}"] + [f"{curves[c][k]:.10g}" for c in curves])
    manifest = Path(args.input)
    manifest = manifest / "manifest.json" if manifest.is_dir() else manifest
    _write_run(out, "cluster", {"k_range": sorted(args.k_range)}, None, [manifest])
    print(f"K={res.k} silhouettes=" + ", ".join(f"{k}:{v:.4f}" for k, v in sorted(res.silhouettes.items())))


def cmd_polarize(args) -> None:
    seq = load_prob_sequence(args.input)
    part = load_party_tsv(args.party, seq)
    r2 = polarization_score(seq, part)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    tm = seq.time_mapping
    with open(out / "polarization.csv", "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "year", "r2"])
        for t, v in zip(seq.times, r2):
            year = "" if tm is None else f"{tm['origin'] + tm['span'] * t:.6g}"
            w.writerow([f"{t:.10g}", year, "" if np.isnan(v) else f"{v:.10g}"])
    manifest = Path(args.input)
    manifest = manifest / "manifest.json" if manifest.is_dir() else manifest
    _write_run(out, "polarize", {}, None, [manifest, args.party])


def cmd_suggest(args) -> None:
    data = load_snapshots(args.input)
    rho = empirical_sparsity(data)
    sug = suggest_bandwidths(data.n, data.m, rho, args.beta)
    for key in ("regime", "n", "m", "rho", "beta", "ell", "h1", "h2", "h3"):
        v = sug[key]
        print(f"{key:>7}: {v:.4g}" if isinstance(v, float) else f"{key:>7}: {v}")
    print("(orders of magnitude only; unknown constants - tune with `cv`)")
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "suggestions.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(sug, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_run(out, "suggest-bandwidths", {"beta": args.beta}, None, [args.input])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvsmooth", description="Multi-stage smoothing for time-varying networks")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_input=True, need_output=True):
        if need_input:
            sp.add_argument("--input", required=True)
        sp.add_argument("--output", required=need_output)
        sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("simulate", help="sample a network from a generator config")
    common(sp, need_input=False)
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--replicate", type=int, default=0)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("cv", help="leave-one-time-out tuning of (ell, h1, h2)")
    common(sp)
    sp.add_argument("--config", help="CV grid JSON (default grid if omitted)")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("fit", help="estimate probability matrices")
    common(sp)
    sp.add_argument("--config", required=True, help="smoothing config or cv report JSON")
    sp.add_argument("--stage", choices=("two", "three"), default="two")
    sp.add_argument("--variant", choices=("proposed", "reversed", "independent", "pooled"))
    sp.add_argument("--times", default="grid", help="'grid' or comma-separated times in [0,1]")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("benchmark", help="replicated simulation benchmark")
    common(sp, need_input=False)
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("cluster", help="Ward clustering of node trajectories")
    common(sp)
    sp.add_argument("--k-range", type=_k_range, default=[3, 4, 5, 6])
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("polarize", help="group-based polarization score per time")
    common(sp)
    sp.add_argument("--party", required=True, help="TSV of time, node, category")
    sp.set_defaults(func=cmd_polarize)

    sp = sub.add_parser("suggest-bandwidths", help="theory-based bandwidth orders")
    common(sp, need_output=False)
    sp.add_argument("--beta", type=float, default=2.0)
    sp.set_defaults(func=cmd_suggest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("tvsmooth: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except TvSmoothError as exc:
        print(f"tvsmooth {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, TypeError, ValueError) as exc:
        tag = "net-core" if isinstance(exc, OSError) else "cli"
        print(f"tvsmooth {args.command}: [{tag}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
