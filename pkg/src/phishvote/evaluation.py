"""Scoring verdicts, comparison reports and the model x prompt accuracy grid.

Phishing is the positive class throughout.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

from phishvote.errors import LengthMismatch, MissingRun, TruthMismatch
from phishvote.prompting import PromptKind
from phishvote.vote import Label

GRID_FORMATS = ("csv", "json", "markdown")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    abstain_fallbacks: int = 0
    n: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "Metrics":
        return cls(**{k: d[k] for k in ("accuracy", "precision", "recall", "f1", "abstain_fallbacks", "n") if k in d})


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def confusion(verdicts: Sequence[Label], truths: Sequence[Label], positive: Label = Label.PHISHING) -> ConfusionMatrix:
    if len(verdicts) != len(truths):
        raise LengthMismatch(f"{len(verdicts)} verdicts vs {len(truths)} truths")
    tp = fp = tn = fn = 0
    for v, t in zip(verdicts, truths):
        if v is positive:
            if t is positive:
                tp += 1
            else:
                fp += 1
        elif t is positive:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def metrics_from_confusion(cm: ConfusionMatrix, abstain_fallbacks: int = 0) -> Metrics:
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = _ratio(2 * precision * recall, precision + recall) if precision + recall else 0.0
    return Metrics(_ratio(cm.tp + cm.tn, cm.total), precision, recall, f1, abstain_fallbacks, cm.total)


def compute_metrics(verdicts: Sequence[Label], truths: Sequence[Label], abstain_fallbacks: int = 0,
                    positive: Label = Label.PHISHING) -> Metrics:
    if len(verdicts) != len(truths):
        raise LengthMismatch(f"{len(verdicts)} verdicts vs {len(truths)} truths")
    if not truths:
        raise LengthMismatch("cannot score an empty run")
    return metrics_from_confusion(confusion(verdicts, truths, positive), abstain_fallbacks)


@dataclass(frozen=True)
class ComparisonReport:
    entries: dict[str, Metrics]
    ensemble_label: str
    best_single: str
    ensemble_delta: float

    def to_dict(self) -> dict:
        return {
            "ensemble": self.ensemble_label,
            "best_single": self.best_single,
            "ensemble_delta": self.ensemble_delta,
            "entries": {k: m.to_dict() for k, m in self.entries.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_markdown(self) -> str:
        lines = ["| run | accuracy | precision | recall | f1 | fallbacks |", "|---|---|---|---|---|---|"]
        for label, m in self.entries.items():
            tag = " (ensemble)" if label == self.ensemble_label else " (best single)" if label == self.best_single else ""
            lines.append(f"| {label}{tag} | {m.accuracy:.4f} | {m.precision:.4f} | {m.recall:.4f} | "
                         f"{m.f1:.4f} | {m.abstain_fallbacks} |")
        lines.append("")
        lines.append(f"ensemble_delta (accuracy, ensemble - best single): {self.ensemble_delta:+.4f}")
        return "\n".join(lines) + "\n"


def build_comparison(runs: Mapping[str, tuple[Sequence[Label], Sequence[Label]]], ensemble_label: str,
                     fallbacks: Mapping[str, int] | None = None) -> ComparisonReport:
    """Score every run and compare the ensemble against the best single run.

    The best single run maximizes accuracy, then F1, then comes first
    lexicographically.
    """
    if ensemble_label not in runs:
        raise MissingRun(f"ensemble run {ensemble_label!r} not supplied")
    singles = [k for k in runs if k != ensemble_label]
    if not singles:
        raise MissingRun("need at least one non-ensemble run to compare against")
    truths = list(runs[ensemble_label][1])
    for label, (_, t) in runs.items():
        if list(t) != truths:
            raise TruthMismatch(f"run {label!r} was scored on different ground truth")
    fallbacks = fallbacks or {}
    entries = {k: compute_metrics(v, t, fallbacks.get(k, 0)) for k, (v, t) in runs.items()}
    best = min(singles, key=lambda k: (-entries[k].accuracy, -entries[k].f1, k))
    delta = entries[ensemble_label].accuracy - entries[best].accuracy
    return ComparisonReport(entries, ensemble_label, best, delta)


def _model_name(model) -> str:
    return getattr(model, "name", str(model))


def _prompt_name(prompt) -> str:
    return getattr(prompt, "value", str(prompt))


def _grid(metrics: Mapping) -> tuple[list[str], list[str], dict[tuple[str, str], Metrics]]:
    cells = {(_model_name(m), _prompt_name(p)): v for (m, p), v in metrics.items()}
    models = sorted({m for m, _ in cells})
    order = [k.value for k in PromptKind]
    present = {p for _, p in cells}
    prompts = [p for p in order if p in present] + sorted(present - set(order))
    return models, prompts, cells


def emit_grid(metrics: Mapping, format: str = "csv") -> str:
    """Models as rows, prompts as columns, accuracy and F1 per cell.

    Rows are sorted by model name; columns follow zero/one/two-shot order.
    Missing cells are left blank.
    """
    if not metrics:
        raise ValueError("empty metrics mapping")
    models, prompts, cells = _grid(metrics)
    if format == "json":
        doc = {
            "models": models,
            "prompts": prompts,
            "cells": [
                {"model": m, "prompt": p, **cells[(m, p)].to_dict()}
                for m in models for p in prompts if (m, p) in cells
            ],
        }
        return json.dumps(doc, indent=2) + "\n"
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model"] + [f"{p}_{metric}" for p in prompts for metric in ("accuracy", "f1")])
        for m in models:
            row = [m]
            for p in prompts:
                c = cells.get((m, p))
                row += [repr(c.accuracy), repr(c.f1)] if c else ["", ""]
            w.writerow(row)
        return buf.getvalue()
    if format == "markdown":
        lines = ["| model | " + " | ".join(prompts) + " |", "|---" * (len(prompts) + 1) + "|"]
        for m in models:
            cols = []
            for p in prompts:
                c = cells.get((m, p))
                cols.append(f"acc {c.accuracy:.3f} / f1 {c.f1:.3f}" if c else "")
            lines.append(f"| {m} | " + " | ".join(cols) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown grid format {format!r}; choose from {GRID_FORMATS}")


def read_grid(text: str) -> dict[tuple[str, str], Metrics]:
    """Inverse of ``emit_grid(..., format="json")``, keyed by (model, prompt) names."""
    doc = json.loads(text)
    return {(c["model"], c["prompt"]): Metrics.from_dict(c) for c in doc["cells"]}
