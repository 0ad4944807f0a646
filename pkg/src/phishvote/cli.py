"""Command-line entry point: ``phishvote {sample,synth,run,simulate,report,cache}``.

Exit codes: 0 success, 2 partial run (resumable from the cache), 1 fatal.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Sequence

from phishvote import dataset as dsmod
from phishvote.config import build_providers, load_config, load_dataset, validate
from phishvote.engine import EnsembleRun, PartialRun, StrategyKind, run_ensemble
from phishvote.errors import AuthFailure, MissingRun, PhishVoteError, TruthMismatch
from phishvote.evaluation import build_comparison, compute_metrics, emit_grid
from phishvote.prompting import load_templates
from phishvote.providers import ResponseCache
from phishvote.simulator import comparability_sweep, parse_gaps, sweep_to_csv
from phishvote.vote import Label, TieBreakPolicy

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("phishvote")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text: str, output: str | None) -> None:
    if output:
        _write(Path(output), text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- sample / synth


def cmd_sample(args) -> int:
    ds = dsmod.load_csv(args.input)
    sub = dsmod.balanced_subsample(ds, args.per_class, args.seed)
    _emit(dsmod.to_csv(sub), args.output)
    log.info("wrote %d samples", len(sub))
    return EXIT_OK


def cmd_synth(args) -> int:
    _emit(dsmod.to_csv(dsmod.synthetic(args.per_class, args.seed)), args.output)
    return EXIT_OK


# ------------------------------------------------------------------------- run


def verdicts_csv(run: EnsembleRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["url", "truth", "verdict"] + [str(c) for c in run.components])
    for url, truth, verdict, row in zip(run.matrix.urls, run.truths, run.verdicts, run.matrix.rows):
        w.writerow([url, truth.value, verdict.value] + [v.value for v in row])
    return buf.getvalue()


def run_metrics(name: str, run: EnsembleRun) -> dict:
    per_component = {}
    grid_cells = {}
    for c in run.components:
        verdicts, fallbacks = run.component_verdicts(c)
        m = compute_metrics(verdicts, run.truths, fallbacks)
        per_component[str(c)] = {**m.to_dict(), "abstain_rate": run.matrix.abstain_rate(c)}
        grid_cells[(c.model, c.prompt)] = m
    return {
        "name": name,
        "strategy": run.spec.strategy.value,
        "tie_break": str(run.spec.tie_break),
        "fallback": run.spec.fallback.value,
        "components": [str(c) for c in run.components],
        "fallback_count": run.fallback_count,
        "ensemble": compute_metrics(run.verdicts, run.truths, run.fallback_count).to_dict(),
        "per_component": per_component,
    }, grid_cells


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {
        "output_dir": Path(args.output_dir) if args.output_dir else None,
        "parallelism": args.parallelism,
        "batch_size": args.batch_size,
        "cache_path": Path(args.cache_path) if args.cache_path else None,
        "tie_break": TieBreakPolicy.parse(args.tie_break) if args.tie_break else None,
    }
    cfg = cfg.with_overrides(**overrides)
    validate(cfg)
    ds = load_dataset(cfg)
    templates = load_templates(cfg.templates_dir)
    providers, _ = build_providers(cfg, ds)
    out = cfg.output_dir
    try:
        run = run_ensemble(cfg.spec(), ds, providers, templates, cfg.temperature, cfg.max_output_tokens)
    except PartialRun as exc:
        _write(out / "manifest.json", _dump_json(exc.manifest.to_dict()))
        print(f"error: {exc}", file=sys.stderr)
        print(f"partial manifest written to {out / 'manifest.json'}; rerun to resume from the cache",
              file=sys.stderr)
        if any(isinstance(c, AuthFailure) for c in exc.causes):
            return EXIT_FATAL
        return EXIT_PARTIAL
    metrics, grid_cells = run_metrics(cfg.name, run)
    _write(out / "verdicts.csv", verdicts_csv(run))
    _write(out / "manifest.json", _dump_json(run.manifest.to_dict()))
    _write(out / "metrics.json", _dump_json(metrics))
    _write(out / "grid.csv", emit_grid(grid_cells, "csv"))
    e = metrics["ensemble"]
    print(f"{cfg.name}: {cfg.strategy.value} over {len(run.components)} component(s), {len(ds)} URLs: "
          f"accuracy {e['accuracy']:.4f} f1 {e['f1']:.4f} fallbacks {run.fallback_count} -> {out}")
    return EXIT_OK


# -------------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    if not 0.0 <= args.rho <= 1.0:
        raise PhishVoteError(f"--rho must lie in [0, 1], got {args.rho}")
    if args.k < 1:
        raise PhishVoteError("--k must be positive")
    rows = comparability_sweep(args.base, parse_gaps(args.gaps), args.rho, args.k,
                               shared_accuracy=args.shared_accuracy, tie_break_to_correct_prob=args.tie_prob)
    _emit(sweep_to_csv(rows), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------- report


def read_run_dir(path: Path) -> tuple[str, str, list[str], list[Label], list[Label], int]:
    metrics = json.loads((path / "metrics.json").read_text(encoding="utf-8"))
    urls, truths, verdicts = [], [], []
    with (path / "verdicts.csv").open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            urls.append(row["url"])
            truths.append(Label(row["truth"]))
            verdicts.append(Label(row["verdict"]))
    return metrics.get("name", path.name), metrics["strategy"], urls, truths, verdicts, metrics.get("fallback_count", 0)


def cmd_report(args) -> int:
    runs, fallbacks, strategies, url_lists = {}, {}, {}, {}
    for d in args.run_dirs:
        try:
            name, strategy, urls, truths, verdicts, fb = read_run_dir(Path(d))
        except OSError as exc:
            raise MissingRun(f"cannot read run directory {d}: {exc}") from exc
        if name in runs:
            name = f"{name}@{d}"
        runs[name], fallbacks[name], strategies[name], url_lists[name] = (verdicts, truths), fb, strategy, urls
    if len(runs) < 2:
        raise MissingRun("report needs an ensemble run and at least one single run")
    first = next(iter(url_lists.values()))
    for name, urls in url_lists.items():
        if urls != first:
            raise TruthMismatch(f"run {name!r} was evaluated on a different URL list")
    ensemble = args.ensemble
    if ensemble is None:
        candidates = [n for n, s in strategies.items() if s != StrategyKind.SINGLE.value]
        if len(candidates) != 1:
            raise MissingRun(f"cannot infer the ensemble run among {candidates or list(runs)}; pass --ensemble")
        ensemble = candidates[0]
    report = build_comparison(runs, ensemble, fallbacks)
    if args.output_dir:
        out = Path(args.output_dir)
        _write(out / "report.json", report.to_json())
        _write(out / "report.md", report.to_markdown())
    sys.stdout.write(report.to_json() if args.format == "json" else report.to_markdown())
    return EXIT_OK


# ----------------------------------------------------------------------- cache


def cmd_cache(args) -> int:
    cache = ResponseCache(args.path)
    if args.action == "inspect":
        counts = Counter(r["model"] for r in cache.records())
        print(f"{args.path}: {len(cache)} record(s)")
        for model, n in sorted(counts.items()):
            print(f"  {model}: {n}")
    else:
        dropped = cache.compact()
        print(f"{args.path}: kept {len(cache)} record(s), dropped {dropped} superseded line(s)")
    return EXIT_OK


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phishvote", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a balanced, seeded subset of a url,label CSV")
    p.add_argument("input", help="source CSV (url,label)")
    p.add_argument("--per-class", type=int, default=dsmod.DEFAULT_PER_CLASS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="subset CSV (default: stdout)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("synth", help="write a made-up balanced URL corpus for offline runs")
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="execute an ensemble described by a TOML/JSON config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--cache-path")
    p.add_argument("--tie-break", help="fail-safe-phishing | fail-open-legitimate | first-listed | seeded-random:<seed>")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="sweep ensemble-vs-best-single accuracy over a performance gap")
    p.add_argument("--k", type=int, default=3, help="number of voters")
    p.add_argument("--base", type=float, default=0.87, help="accuracy of the k-1 baseline voters")
    p.add_argument("--gaps", default="0:0.12:0.02", help="start:stop:step (inclusive) or comma list")
    p.add_argument("--rho", type=float, default=0.0, help="shared-draw probability in [0, 1]")
    p.add_argument("--shared-accuracy", type=float, help="accuracy of the shared draw (default: mean voter accuracy)")
    p.add_argument("--tie-prob", type=float, default=0.5, help="probability an even split resolves correctly")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="compare an ensemble run against single-component runs")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--ensemble", help="run name of the ensemble (default: the only non-single run)")
    p.add_argument("--format", choices=("markdown", "json"), default="markdown")
    p.add_argument("--output-dir", help="also write report.json and report.md here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("cache", help="inspect or compact a record/replay cache")
    p.add_argument("action", choices=("inspect", "compact"))
    p.add_argument("path")
    p.set_defaults(func=cmd_cache)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PhishVoteError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
