"""Exit criteria for the build, one test per criterion.

Each test records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary under "acceptance criteria".
"""

import itertools
import json
import math
import random
import string
import time
from pathlib import Path

import pytest

from conftest import mock_registry
from phishvote.cli import main
from phishvote.dataset import synthetic, write_csv
from phishvote.engine import EnsembleSpec, StrategyKind, run_ensemble
from phishvote.errors import NoValidVotes
from phishvote.evaluation import compute_metrics
from phishvote.prompting import PromptKind, default_templates, parse_batch_response
from phishvote.providers import MockBehavior, ModelId
from phishvote.simulator import (
    MixtureModel,
    comparability_sweep,
    independent_majority_accuracy,
    monte_carlo_ensemble,
)
from phishvote.vote import (
    FAIL_OPEN_LEGITIMATE,
    FAIL_SAFE_PHISHING,
    FIRST_LISTED_COMPONENT,
    Label,
    Vote,
    majority_vote,
    seeded_random,
)

pytestmark = pytest.mark.acceptance

RESULTS: list[str] = []
FIXTURES = json.loads((Path(__file__).parent / "fixtures" / "malformed_responses.json").read_text(encoding="utf-8"))
P, L, A = Vote.PHISHING, Vote.LEGITIMATE, Vote.ABSTAIN


def check(n, title, ok, detail=""):
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] AC{n} {title}" + (f" ({detail})" if detail else ""))
    assert ok, f"AC{n} {title}: {detail}"


# ----------------------------------------------------------------------- AC1


def brute_force_vote(seq, policy, seeded_table):
    valid = [v for v in seq if v is not A]
    if not valid:
        return "no-valid-votes"
    p = valid.count(P)
    l = len(valid) - p
    if p > l:
        return Label.PHISHING
    if l > p:
        return Label.LEGITIMATE
    if policy is FAIL_SAFE_PHISHING:
        return Label.PHISHING
    if policy is FAIL_OPEN_LEGITIMATE:
        return Label.LEGITIMATE
    if policy is FIRST_LISTED_COMPONENT:
        return Label(valid[0].value)
    # Seeded ties: resolved identically for every sequence sharing (seed, counts).
    return seeded_table.setdefault((p, l), majority_vote([P] * p + [L] * l, policy))


def test_ac1_vote_core_exhaustive_oracle():
    start = time.perf_counter()
    policies = [FAIL_SAFE_PHISHING, FAIL_OPEN_LEGITIMATE, FIRST_LISTED_COMPONENT, seeded_random(42)]
    checked = mismatches = 0
    for policy in policies:
        seeded_table = {}
        for n in range(8):
            for seq in itertools.product((P, L, A), repeat=n):
                want = brute_force_vote(seq, policy, seeded_table)
                try:
                    got = majority_vote(seq, policy)
                except NoValidVotes:
                    got = "no-valid-votes"
                checked += 1
                mismatches += got != want
    elapsed = time.perf_counter() - start
    check(1, "vote-core exhaustive oracle, 4 policies",
          mismatches == 0 and elapsed < 5.0, f"{checked} cases, {mismatches} mismatches, {elapsed:.2f}s < 5s")


# ----------------------------------------------------------------------- AC2


def counting_oracle(verdicts, truths):
    tp = sum(v is Label.PHISHING and t is Label.PHISHING for v, t in zip(verdicts, truths))
    fp = sum(v is Label.PHISHING and t is Label.LEGITIMATE for v, t in zip(verdicts, truths))
    fn = sum(v is Label.LEGITIMATE and t is Label.PHISHING for v, t in zip(verdicts, truths))
    tn = sum(v is Label.LEGITIMATE and t is Label.LEGITIMATE for v, t in zip(verdicts, truths))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return (tp + tn) / len(truths), precision, recall, f1


def test_ac2_metrics_oracle():
    rng = random.Random(20240501)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(1, 200)
        truths = [rng.choice(list(Label)) for _ in range(n)]
        verdicts = [rng.choice(list(Label)) for _ in range(n)]
        m = compute_metrics(verdicts, truths)
        got = (m.accuracy, m.precision, m.recall, m.f1)
        worst = max([worst] + [abs(a - b) for a, b in zip(got, counting_oracle(verdicts, truths))])
    check(2, "metrics vs counting oracle, 1000 random pairs", worst <= 1e-12, f"max abs error {worst:.2e} <= 1e-12")


# ----------------------------------------------------------------------- AC3


def test_ac3_simulator_exactness():
    a = independent_majority_accuracy([0.9, 0.9, 0.9])
    b = independent_majority_accuracy([0.95, 0.85, 0.85])
    mc_a = monte_carlo_ensemble([0.9, 0.9, 0.9], MixtureModel(0.0), trials=100_000, seed=31).ensemble_accuracy
    mc_b = monte_carlo_ensemble([0.95, 0.85, 0.85], MixtureModel(0.0), trials=100_000, seed=32).ensemble_accuracy
    ok = a == 0.972 and b == 0.96475 and abs(mc_a - 0.972) <= 0.005 and abs(mc_b - 0.96475) <= 0.005
    check(3, "simulator exact values and Monte Carlo agreement", ok,
          f"exact {a!r}, {b!r}; MC {mc_a:.5f}, {mc_b:.5f} within +-0.005")


# ----------------------------------------------------------------------- AC4


def test_ac4_comparability_finding():
    start = time.perf_counter()
    (similar,) = comparability_sweep(0.87, [0.0], rho=0.0, k=3)
    (dominant,) = comparability_sweep(0.85, [0.12], rho=0.8, k=5)
    elapsed = time.perf_counter() - start
    ok = (similar.delta > 0 and math.isclose(similar.ensemble_accuracy, 0.953694, abs_tol=1e-12)
          and dominant.delta < 0 and elapsed < 1.0)
    check(4, "comparability: similar voters gain, dominant voter loses", ok,
          f"gap0 ensemble {similar.ensemble_accuracy:.6f} delta {similar.delta:+.6f}; "
          f"gap0.12 delta {dominant.delta:+.6f}; {elapsed * 1000:.1f}ms < 1s")


# ----------------------------------------------------------------------- AC5


def test_ac5_end_to_end_statistical():
    start = time.perf_counter()
    templates = default_templates()
    predicted = independent_majority_accuracy([0.9, 0.9, 0.9])
    wins = 0
    first_accuracy = None
    for rep in range(100):
        ds = synthetic(100, seed=1000 + rep)
        behaviors = {f"voter-{i}": MockBehavior(0.9, 0.0, 10_000 + 3 * rep + i) for i in range(3)}
        spec = EnsembleSpec(StrategyKind.HYBRID, tuple(ModelId(n) for n in behaviors), (PromptKind.ZERO_SHOT,),
                            batch_size=50, parallelism=3)
        run = run_ensemble(spec, ds, mock_registry(ds, behaviors), templates)
        ens = compute_metrics(run.verdicts, run.truths).accuracy
        worst = min(compute_metrics(run.component_verdicts(c)[0], run.truths).accuracy for c in run.components)
        if first_accuracy is None:
            first_accuracy = ens
        wins += ens > worst
    elapsed = time.perf_counter() - start
    ok = abs(first_accuracy - predicted) <= 0.06 and wins >= 95 and elapsed < 30
    check(5, "hybrid of 3 mock voters at 0.9 on 200 URLs", ok,
          f"accuracy {first_accuracy:.3f} vs predicted {predicted} (+-0.06); beats worst component "
          f"{wins}/100 (>=95); {elapsed:.1f}s < 30s")


# ----------------------------------------------------------------------- AC6


def test_ac6_replay_determinism(tmp_path):
    write_csv(synthetic(60, 5), tmp_path / "urls.csv")
    models = "".join(
        f'[[models]]\nname = "m{i}"\nprovider = "{{kind}}"\n{{extra{i}}}\n' for i in range(3))
    base = ('name = "det"\nstrategy = "hybrid"\nprompts = ["zero-shot", "one-shot", "two-shot"]\n'
            'dataset_path = "urls.csv"\nper_class = 50\nsample_seed = 3\nbatch_size = 20\n'
            'cache_path = "cache.jsonl"\nparallelism = 4\n')
    mock_models = models.format(kind="mock", **{f"extra{i}": f"accuracy = 0.8\nabstain_rate = 0.05\nseed = {i}"
                                               for i in range(3)})
    replay_models = models.format(kind="replay", **{f"extra{i}": "" for i in range(3)})
    (tmp_path / "record.toml").write_text(base + 'output_dir = "rec"\n' + mock_models)
    (tmp_path / "replay.toml").write_text(base + 'output_dir = "rep"\n' + replay_models)
    assert main(["run", str(tmp_path / "record.toml")]) == 0
    assert main(["run", str(tmp_path / "replay.toml"), "--output-dir", str(tmp_path / "rep1")]) == 0
    assert main(["run", str(tmp_path / "replay.toml"), "--output-dir", str(tmp_path / "rep2")]) == 0
    same = all((tmp_path / "rep1" / f).read_bytes() == (tmp_path / "rep2" / f).read_bytes()
               for f in ("verdicts.csv", "metrics.json"))
    matches_recording = (tmp_path / "rep1/verdicts.csv").read_bytes() == (tmp_path / "rec/verdicts.csv").read_bytes()
    check(6, "replayed runs are byte-identical", same and matches_recording,
          "verdicts.csv and metrics.json identical across two replay runs and the recording run")


# ----------------------------------------------------------------------- AC7


def random_response(rng):
    kind = rng.random()
    if kind < 0.3:
        alphabet = string.printable + "éß✅🎣\x00 \x85"
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 300)))
    if kind < 0.4:
        return bytes(rng.randrange(256) for _ in range(rng.randint(0, 200))).decode("utf-8", errors="replace")
    lines = []
    for _ in range(rng.randint(0, 60)):
        idx = rng.choice([str(rng.randint(-5, 80)), "", "x", "1.5", str(10 ** rng.randint(1, 30))])
        word = rng.choice(["phishing", "legitimate", "PHISHING", "Legit", "unsure", "", "phish"])
        decor = rng.choice(["", "**", "`", "> ", "- ", "```", "## "])
        sep = rng.choice([". ", ".", ") ", ": ", " . ", ".\t"])
        tail = rng.choice(["", "!", ".", " because", "?!", " ✅"])
        lines.append(f"{decor}{idx}{sep}{word}{tail}{decor.strip()}")
    return rng.choice(["\n", "\r\n", "\r"]).join(lines)


def test_ac7_parser_totality():
    fixture_ok = all(
        [v.value for v in parse_batch_response(c["text"], c["expected_count"])] == c["expected"] for c in FIXTURES)
    rng = random.Random(777)
    failures = 0
    for _ in range(100_000):
        n = rng.randint(1, 60)
        try:
            votes = parse_batch_response(random_response(rng), n)
            if len(votes) != n:
                failures += 1
        except Exception:
            failures += 1
    check(7, "parser totality", len(FIXTURES) == 50 and fixture_ok and failures == 0,
          f"{len(FIXTURES)} fixtures match grammar: {fixture_ok}; 100000 fuzz inputs, {failures} failures")


# ----------------------------------------------------------------------- AC8


def test_ac8_strategy_degeneracy():
    templates = default_templates()
    ds = synthetic(60, 21)
    behaviors = {f"m{i}": MockBehavior(0.72, 0.08, 500 + i) for i in range(3)}
    reg = mock_registry(ds, behaviors)
    prompts = tuple(PromptKind)
    one = (ModelId("m0"),)
    three = tuple(ModelId(n) for n in behaviors)

    def verdicts(strategy, ms, ps):
        return run_ensemble(EnsembleSpec(strategy, ms, ps, batch_size=25), ds, reg, templates).verdicts

    a = verdicts(StrategyKind.HYBRID, one, prompts) == verdicts(StrategyKind.PROMPT_BASED, one, prompts)
    b = (verdicts(StrategyKind.HYBRID, three, (PromptKind.ONE_SHOT,))
         == verdicts(StrategyKind.MODEL_BASED, three, (PromptKind.ONE_SHOT,)))
    check(8, "strategy degeneracy", a and b, f"hybrid(1x3)==prompt-based: {a}; hybrid(3x1)==model-based: {b}")
