"""Exact and Monte-Carlo accuracy of k-voter majority ensembles.

Voters are correct independently with their own accuracy, except that with
probability ``rho`` the whole ensemble collapses onto one shared draw that is
correct with probability ``shared_accuracy``. That shared-draw mixture is the
smallest model in which one strong voter surrounded by weaker, correlated
voters loses to its own single-model accuracy.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from phishvote.errors import AccuracyOutOfRange, TooManyVoters

MAX_EXACT_VOTERS = 20
SWEEP_HEADER = ("gap", "rho", "k", "ensemble_accuracy", "best_single", "delta")


@dataclass(frozen=True)
class VoterProfile:
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise AccuracyOutOfRange(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass(frozen=True)
class MixtureModel:
    rho: float = 0.0
    shared_accuracy: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho {self.rho} outside [0, 1]")
        if not 0.0 <= self.shared_accuracy <= 1.0:
            raise AccuracyOutOfRange(f"shared_accuracy {self.shared_accuracy} outside [0, 1]")


@dataclass(frozen=True)
class SimResult:
    ensemble_accuracy: float
    best_single_accuracy: float
    delta: float
    method: str  # "exact" or "monte-carlo"
    trials: int | None = None
    seed: int | None = None

    @property
    def std_error(self) -> float | None:
        if self.trials is None:
            return None
        p = self.ensemble_accuracy
        return math.sqrt(p * (1 - p) / self.trials)


def _accuracies(profiles: Iterable[VoterProfile | float]) -> list[float]:
    out = []
    for p in profiles:
        acc = p.accuracy if isinstance(p, VoterProfile) else float(p)
        if not 0.0 <= acc <= 1.0:
            raise AccuracyOutOfRange(f"accuracy {acc} outside [0, 1]")
        out.append(acc)
    if not out:
        raise ValueError("need at least one voter")
    return out


def _exact(x: float) -> Fraction:
    # The shortest decimal repr is what the caller typed, so 0.9 becomes 9/10
    # rather than the binary float nearest to it.
    return Fraction(repr(float(x)))


def _independent_exact(accs: Sequence[float], tie_to_correct: float) -> Fraction:
    k = len(accs)
    if k > MAX_EXACT_VOTERS:
        raise TooManyVoters(f"{k} voters exceeds the exact limit of {MAX_EXACT_VOTERS}; use monte_carlo_ensemble")
    # dist[j] = P(exactly j voters correct), built one voter at a time.
    dist = [Fraction(1)]
    for a in map(_exact, accs):
        nxt = [Fraction(0)] * (len(dist) + 1)
        for j, mass in enumerate(dist):
            nxt[j + 1] += mass * a
            nxt[j] += mass * (1 - a)
        dist = nxt
    win = sum((dist[j] for j in range(k + 1) if 2 * j > k), Fraction(0))
    if k % 2 == 0:
        win += dist[k // 2] * _exact(tie_to_correct)
    return win


def independent_majority_accuracy(profiles: Sequence[VoterProfile | float], tie_break_to_correct_prob: float = 0.5) -> float:
    """Probability that a majority of independent voters is correct.

    Ties (even k) count as correct with ``tie_break_to_correct_prob``. The sum
    over all 2^k outcomes is carried out in exact rational arithmetic and
    rounded once, so e.g. three 0.9 voters give exactly ``0.972``.
    """
    return float(_independent_exact(_accuracies(profiles), tie_break_to_correct_prob))


def mixture_majority_accuracy(profiles: Sequence[VoterProfile | float], mix: MixtureModel,
                              tie_break_to_correct_prob: float = 0.5) -> float:
    independent = _independent_exact(_accuracies(profiles), tie_break_to_correct_prob)
    rho = _exact(mix.rho)
    return float(rho * _exact(mix.shared_accuracy) + (1 - rho) * independent)


def exact_ensemble(profiles: Sequence[VoterProfile | float], mix: MixtureModel | None = None,
                   tie_break_to_correct_prob: float = 0.5) -> SimResult:
    accs = _accuracies(profiles)
    mix = mix or MixtureModel(0.0)
    ens = mixture_majority_accuracy(accs, mix, tie_break_to_correct_prob)
    best = max(accs)
    return SimResult(ens, best, ens - best, "exact")


def monte_carlo_ensemble(profiles: Sequence[VoterProfile | float], mix: MixtureModel | None = None,
                         trials: int = 100_000, seed: int = 0, tie_break_to_correct_prob: float = 0.5,
                         chunk: int = 65_536) -> SimResult:
    """Seeded simulation of ``trials`` items; works for any number of voters."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    accs = np.asarray(_accuracies(profiles))
    mix = mix or MixtureModel(0.0)
    k = len(accs)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        correct = (rng.random((n, k)) < accs).sum(axis=1)
        tie_draw = rng.random(n) < tie_break_to_correct_prob
        independent = (2 * correct > k) | ((2 * correct == k) & tie_draw)
        shared = rng.random(n) < mix.rho
        shared_ok = rng.random(n) < mix.shared_accuracy
        hits += int(np.where(shared, shared_ok, independent).sum())
        done += n
    est = hits / trials
    best = float(accs.max())
    return SimResult(est, best, est - best, "monte-carlo", trials, seed)


@dataclass(frozen=True)
class SweepRow:
    gap: float
    rho: float
    k: int
    ensemble_accuracy: float
    best_single: float
    delta: float


def comparability_sweep(base_accuracy: float, gap_range: Iterable[float], rho: float, k: int,
                        shared_accuracy: float | None = None,
                        tie_break_to_correct_prob: float = 0.5) -> list[SweepRow]:
    """One voter at ``base + gap`` and ``k - 1`` voters at ``base``, per gap.

    ``shared_accuracy`` defaults to the mean voter accuracy: the shared draw
    is then an "average member" of the ensemble.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho {rho} outside [0, 1]")
    rows = []
    for gap in gap_range:
        top = base_accuracy + gap
        if not (0.0 <= base_accuracy <= 1.0 and 0.0 <= top <= 1.0):
            raise AccuracyOutOfRange(f"base {base_accuracy} + gap {gap} = {top} outside [0, 1]")
        accs = [top] + [base_accuracy] * (k - 1)
        shared = float(sum(map(_exact, accs)) / len(accs)) if shared_accuracy is None else shared_accuracy
        res = exact_ensemble(accs, MixtureModel(rho, shared), tie_break_to_correct_prob)
        rows.append(SweepRow(gap, rho, k, res.ensemble_accuracy, res.best_single_accuracy, res.delta))
    return rows


def parse_gaps(text: str) -> list[float]:
    """``"0:0.12:0.02"`` (inclusive start:stop:step) or ``"0,0.05,0.1"``."""
    text = text.strip()
    if ":" in text:
        start_s, stop_s, step_s = text.split(":")
        start, stop, step = _exact(float(start_s)), _exact(float(stop_s)), _exact(float(step_s))
        if step <= 0:
            raise ValueError("gap step must be positive")
        n = math.floor((stop - start) / step) + 1
        return [float(start + i * step) for i in range(max(n, 0))]
    return [float(x) for x in text.split(",") if x.strip()]


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([repr(r.gap), repr(r.rho), r.k, repr(r.ensemble_accuracy), repr(r.best_single), repr(r.delta)])
    return buf.getvalue()
