"""Run prompt-based, model-based and hybrid majority-vote ensembles over a dataset."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from phishvote.dataset import DEFAULT_BATCH_SIZE, Batch, Dataset, batch
from phishvote.errors import ConfigError, NoValidVotes, ProviderError, ProviderUnavailable
from phishvote.prompting import PromptKind, PromptTemplate, check_leakage, parse_batch_response, render_batch_prompt
from phishvote.providers import ChatRequest, ModelId, Provider
from phishvote.vote import FAIL_SAFE_PHISHING, Label, TieBreakPolicy, Vote, majority_vote

log = logging.getLogger(__name__)


class StrategyKind(enum.Enum):
    SINGLE = "single"
    PROMPT_BASED = "prompt-based"
    MODEL_BASED = "model-based"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class ComponentId:
    model: ModelId
    prompt: PromptKind

    def __str__(self) -> str:
        return f"{self.model.name}/{self.prompt.value}"


@dataclass(frozen=True)
class EnsembleSpec:
    strategy: StrategyKind
    models: tuple[ModelId, ...]
    prompts: tuple[PromptKind, ...]
    tie_break: TieBreakPolicy = FAIL_SAFE_PHISHING
    batch_size: int = DEFAULT_BATCH_SIZE
    parallelism: int = 1
    fallback: Label = Label.PHISHING

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "prompts", tuple(self.prompts))
        self.validate()

    def validate(self) -> None:
        n_models, n_prompts = len(self.models), len(self.prompts)
        if n_models < 1 or n_prompts < 1:
            raise ConfigError("an ensemble needs at least one model and one prompt")
        names = [m.name for m in self.models]
        if len(set(names)) != n_models:
            raise ConfigError(f"duplicate model names: {names}")
        if len(set(self.prompts)) != n_prompts:
            raise ConfigError("duplicate prompt kinds")
        if self.batch_size < 1 or self.parallelism < 1:
            raise ConfigError("batch_size and parallelism must be positive")
        s = self.strategy
        ok = {
            StrategyKind.SINGLE: n_models == 1 and n_prompts == 1,
            StrategyKind.PROMPT_BASED: n_models == 1 and n_prompts >= 2,
            StrategyKind.MODEL_BASED: n_models >= 2 and n_prompts == 1,
            # Degenerate 1xN / Nx1 hybrids are allowed so they can be checked
            # against the prompt- and model-based strategies.
            StrategyKind.HYBRID: n_models * n_prompts >= 2,
        }[s]
        if not ok:
            raise ConfigError(f"{s.value} ensemble cannot use {n_models} model(s) x {n_prompts} prompt(s)")


def enumerate_components(spec: EnsembleSpec) -> list[ComponentId]:
    """Models outer, prompts inner, both in spec order."""
    return [ComponentId(m, p) for m in spec.models for p in spec.prompts]


@dataclass(frozen=True)
class VoteMatrix:
    components: tuple[ComponentId, ...]
    urls: tuple[str, ...]
    rows: tuple[tuple[Vote, ...], ...]

    def column(self, component: ComponentId) -> list[Vote]:
        j = self.components.index(component)
        return [row[j] for row in self.rows]

    def abstain_rate(self, component: ComponentId) -> float:
        col = self.column(component)
        return sum(v is Vote.ABSTAIN for v in col) / len(col) if col else 0.0


@dataclass(frozen=True)
class RunManifest:
    strategy: str
    components: tuple[str, ...]
    n_batches: int
    completed: tuple[tuple[str, int], ...]
    failed: tuple[tuple[str, int, str], ...] = ()

    @property
    def status(self) -> str:
        return "partial" if self.failed else "complete"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "strategy": self.strategy,
            "components": list(self.components),
            "batches": self.n_batches,
            "completed": [{"component": c, "batch": b} for c, b in self.completed],
            "failed": [{"component": c, "batch": b, "error": e} for c, b, e in self.failed],
        }


class PartialRun(ProviderUnavailable):
    """Some component x batch requests failed; completed work is in ``manifest``."""

    def __init__(self, manifest: RunManifest, causes: Sequence[ProviderError]):
        super().__init__(f"{len(manifest.failed)} of {len(manifest.completed) + len(manifest.failed)} "
                         f"requests failed; first error: {causes[0]}")
        self.manifest = manifest
        self.causes = list(causes)


@dataclass
class EnsembleRun:
    spec: EnsembleSpec
    matrix: VoteMatrix
    verdicts: list[Label]
    fallback_count: int
    truths: list[Label] = field(default_factory=list)
    manifest: RunManifest | None = None

    @property
    def components(self) -> tuple[ComponentId, ...]:
        return self.matrix.components

    def component_verdicts(self, component: ComponentId) -> tuple[list[Label], int]:
        """One component scored on its own; abstentions take the fallback label."""
        out, fallbacks = [], 0
        for v in self.matrix.column(component):
            if v is Vote.ABSTAIN:
                out.append(self.spec.fallback)
                fallbacks += 1
            else:
                out.append(v.label)
        return out, fallbacks


def decide(rows: Sequence[Sequence[Vote]], policy: TieBreakPolicy, fallback: Label) -> tuple[list[Label], int]:
    verdicts, fallbacks = [], 0
    for i, row in enumerate(rows):
        try:
            verdicts.append(majority_vote(row, policy, salt=str(i)))
        except NoValidVotes:
            verdicts.append(fallback)
            fallbacks += 1
    return verdicts, fallbacks


def run_ensemble(spec: EnsembleSpec, ds: Dataset, providers: Mapping[str, Provider],
                 templates: Mapping[PromptKind, PromptTemplate], temperature: float = 0.0,
                 max_output_tokens: int = 2048) -> EnsembleRun:
    """Send every (component, batch) prompt once, parse the answers, and vote.

    Raises:
        ConfigError: unknown model/prompt or empty dataset.
        ExemplarLeakage: an exemplar URL is part of ``ds``.
        PartialRun: one or more requests failed; other results are discarded
            here but have reached any record/replay cache, so a rerun resumes.
    """
    if len(ds) == 0:
        raise ConfigError("dataset is empty")
    missing = [m.name for m in spec.models if m.name not in providers]
    if missing:
        raise ConfigError(f"no provider registered for: {', '.join(missing)}")
    missing_t = [p.value for p in spec.prompts if p not in templates]
    if missing_t:
        raise ConfigError(f"no template for: {', '.join(missing_t)}")
    check_leakage([templates[p] for p in spec.prompts], ds.urls)

    components = enumerate_components(spec)
    batches = batch(ds, spec.batch_size)
    # Render up front so template errors surface before any request is sent.
    rendered = {(p, b.index): render_batch_prompt(templates[p], b) for p in spec.prompts for b in batches}

    def work(c: ComponentId, b: Batch) -> list[Vote]:
        prompt = rendered[(c.prompt, b.index)]
        request = ChatRequest(c.model, prompt.text, temperature, max_output_tokens)
        response = providers[c.model.name].complete(request)
        return parse_batch_response(response.text, prompt.url_count)

    tasks = [(ci, c, b) for ci, c in enumerate(components) for b in batches]
    with ThreadPoolExecutor(max_workers=spec.parallelism) as pool:
        futures = [pool.submit(work, c, b) for _, c, b in tasks]
        results: dict[tuple[int, int], list[Vote]] = {}
        completed, failed, causes = [], [], []
        # Collected positionally, so scheduling never affects the output.
        for (ci, c, b), fut in zip(tasks, futures):
            try:
                results[(ci, b.index)] = fut.result()
                completed.append((str(c), b.index))
            except ProviderError as exc:
                log.error("%s batch %d failed: %s", c, b.index, exc)
                failed.append((str(c), b.index, f"{type(exc).__name__}: {exc}"))
                causes.append(exc)

    manifest = RunManifest(spec.strategy.value, tuple(map(str, components)), len(batches),
                           tuple(completed), tuple(failed))
    if failed:
        raise PartialRun(manifest, causes)

    columns = []
    for ci in range(len(components)):
        col: list[Vote] = []
        for b in batches:
            col.extend(results[(ci, b.index)])
        columns.append(col)
    rows = tuple(tuple(col[r] for col in columns) for r in range(len(ds)))
    matrix = VoteMatrix(tuple(components), tuple(ds.urls), rows)
    verdicts, fallbacks = decide(rows, spec.tie_break, spec.fallback)
    return EnsembleRun(spec, matrix, verdicts, fallbacks, ds.truths, manifest)
