"""``benchforge`` command line: evolve suites and analyse them."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis
from .config import ConfigError, load_config, parse_pool
from .evolution import Candidate, GenerationAborted, ResumeError, prune, run, update_archive
from .exprlang import ParseError, ShapeError
from .generator import GeneratorError, make_generator
from .landscape import FEATURE_NAMES, extract_features
from .objectives import Scores
from .problems import Problem, SchemaError, Suite, resolve_suite, save_suite
from .solvers import derive_seed

log = logging.getLogger("benchforge")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


def _load_pool(spec: str):
    if spec == "default":
        return parse_pool("default", "--pool")
    try:
        doc = json.loads(Path(spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("--pool", f"cannot read pool file {spec}: {exc}") from None
    return parse_pool(doc, "--pool")


def _suite(spec: str, dim: int) -> Suite:
    try:
        return resolve_suite(spec, dim)
    except FileNotFoundError:
        raise UsageError(f"suite not found: {spec}") from None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_evolve(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    generator = make_generator(cfg.generator, cfg.n_probe, derive_seed(cfg.master_seed, "probe"))

    def summary(record):
        valid = [s for s in record["slots"] if s["valid"]]
        best_lsi = max((s["lsi"] for s in valid), default=0.0)
        best_adc = max((s["adc"] for s in valid), default=0.0)
        print(
            f"gen {record['generation']:>3}  best LSI {best_lsi:.4f}  best ADC {best_adc:.4f}  "
            f"archive {len(record['archive'])}  ({record['timing']['seconds']:.1f}s)",
            flush=True,
        )

    result = run(cfg, generator, cfg.output_dir, args.resume, args.threads, summary, args.stop_after)
    if result.completed:
        print(f"wrote {len(result.suite)} programs to {Path(cfg.output_dir) / 'suite.json'}")
    else:
        print(f"stopped after generation {result.state.t}; continue with --resume")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    suite = _suite(args.suite, args.dim)
    pool = _load_pool(args.pool)
    matrices = analysis.suite_matrices(suite, pool, args.B, args.budget, args.seed)
    out = Path(args.out)
    summary = {}
    for label, m in matrices.items():
        _write(out / f"obj-{label}.csv", m.to_csv())
        summary[label] = dict(zip(m.labels, m.values.mean(axis=0).tolist()))
    _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    width = max(len(label) for label in summary)
    for label, means in summary.items():
        best = min(means, key=means.get)
        print(f"{label:<{width}}  best {best} ({means[best]:.4g})")
    print(f"wrote {len(matrices)} matrices to {out}")
    return EXIT_OK


def cmd_features(args) -> int:
    if Path(args.target).exists() or args.target.startswith("builtin:"):
        problems = list(_suite(args.target, args.dim))
    else:
        problems = [Problem.from_source("program", args.target, args.dim, tuple(args.bounds))]
    doc = {}
    for p in problems:
        n = args.n or 25 * p.dim
        doc[p.label] = extract_features(p, n, args.seed).to_dict()
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        _write(Path(args.out), text)
    for label, feats in doc.items():
        print(label)
        for name in FEATURE_NAMES:
            print(f"  {name:<24} {feats[name]: .6f}")
    return EXIT_OK


def cmd_consistency(args) -> int:
    pool = _load_pool(args.pool)
    a = analysis.rank_vector(_suite(args.suite_a, args.dim), pool, args.B, args.budget, args.seed)
    b = analysis.rank_vector(_suite(args.suite_b, args.dim), pool, args.B, args.budget, args.seed)
    c = analysis.consistency(a, b)
    if args.out:
        _write(Path(args.out), json.dumps({"consistency": c, "a": a.to_dict(), "b": b.to_dict()}, indent=2) + "\n")
    print(c)
    return EXIT_OK


def cmd_diversity(args) -> int:
    suite = _suite(args.suite, args.dim)
    report = analysis.diversity_distribution(suite, _load_pool(args.pool), args.B, args.budget, args.seed)
    out = Path(args.out)
    _write(out / "diversity.json", report.to_json())
    _write(out / "diversity_values.csv", report.values_csv())
    _write(out / "diversity_hist.csv", report.histogram_csv())
    print(f"{len(report.values)} values, {report.occupied_bins} of {len(report.counts)} bins occupied")
    peak = max(report.counts) or 1
    for lo, count in zip(report.bin_edges[:-1], report.counts):
        print(f"{lo:5.2f} {'#' * round(40 * count / peak)}")
    return EXIT_OK


def merge_suites(suites: list[Suite], size: int) -> tuple[Suite, bool]:
    """Non-dominated merge by stored scores, pruned to ``size``; the flag reports a shortfall."""
    items, by_id, used = [], {}, set()
    for k, suite in enumerate(suites):
        for p in suite:
            if not p.scores or "lsi" not in p.scores or "adc" not in p.scores:
                raise SchemaError(f"{suite.name}.{p.label}.scores", "merge needs lsi and adc scores")
            label = p.label if p.label not in used else f"{p.label}@{k}"
            used.add(label)
            items.append(Candidate(label, p.source, Scores(True, p.scores["lsi"], p.scores["adc"]), 0, 0))
            by_id[label] = replace(p, label=label) if label != p.label else p
    front = update_archive([], items)
    kept = prune(front, size)
    metadata = dict(suites[0].metadata)
    metadata["merged_from"] = [s.name for s in suites]
    return Suite(suites[0].name, tuple(by_id[c.id] for c in kept), metadata), len(front) < size


def cmd_merge(args) -> int:
    suites = [_suite(path, args.dim) for path in args.suites]
    merged, short = merge_suites(suites, args.size)
    if short:
        log.warning("only %d non-dominated programs available, fewer than --size %d", len(merged), args.size)
    save_suite(merged, args.out)
    print(f"merged {sum(len(s) for s in suites)} programs into {len(merged)} -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _analysis_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pool", default="default", help='"default" or a JSON file with a list of solver specs')
    p.add_argument("--B", type=int, default=10, help="independent runs per solver (default 10)")
    p.add_argument("--budget", type=int, default=5000, help="evaluations per run (default 5000)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--dim", type=int, default=10, help="dimension for built-in suites (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="benchforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="evolve a suite from a JSON run config")
    p.add_argument("config")
    p.add_argument("--resume", action="store_true", help="continue from the newest checkpoint")
    p.add_argument("--threads", type=int, default=1, help="worker threads per generation (default 1)")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--output-dir", default=None, help="override output_dir")
    p.add_argument("--stop-after", type=int, default=None, help="stop after this generation's checkpoint")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("evaluate", help="run the solver pool on a suite and write result matrices")
    p.add_argument("suite")
    p.add_argument("--out", default="evaluation")
    _analysis_options(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("features", help="landscape features of a program or suite")
    p.add_argument("target", help="DSL source, suite path, or builtin:<name>")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--bounds", type=float, nargs=2, default=(-5.0, 5.0), metavar=("LO", "HI"))
    p.add_argument("--n", type=int, default=None, help="design size (default 25 * dim)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the feature JSON here")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("consistency", help="performance consistency between two suites")
    p.add_argument("suite_a")
    p.add_argument("suite_b")
    p.add_argument("--out", default=None)
    _analysis_options(p)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("diversity", help="distribution of solver-result spread over a suite")
    p.add_argument("suite")
    p.add_argument("--out", default="diversity")
    _analysis_options(p)
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("merge", help="merge suites into one non-dominated suite of a given size")
    p.add_argument("suites", nargs="+")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", default="merged.json")
    p.add_argument("--dim", type=int, default=10)
    p.set_defaults(func=cmd_merge)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, UsageError, ParseError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GenerationAborted, GeneratorError, ResumeError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
