"""Run configuration files (TOML or JSON) and the provider registry built from them."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from phishvote.dataset import DEFAULT_BATCH_SIZE, Dataset, balanced_subsample, load_csv
from phishvote.engine import EnsembleSpec, StrategyKind
from phishvote.errors import ConfigError
from phishvote.prompting import PromptKind
from phishvote.providers import (
    ADAPTERS,
    HttpProvider,
    MockBehavior,
    MockProvider,
    ModelId,
    Provider,
    ProviderKind,
    ReplayProvider,
    ResponseCache,
    RetryPolicy,
    TokenBucket,
)
from phishvote.vote import Label, TieBreakPolicy


@dataclass(frozen=True)
class ModelEntry:
    name: str
    provider: ProviderKind
    options: dict[str, Any] = field(default_factory=dict)

    @property
    def model_id(self) -> ModelId:
        return ModelId(self.name, self.provider)


@dataclass(frozen=True)
class RunConfig:
    dataset_path: Path
    strategy: StrategyKind
    models: tuple[ModelEntry, ...]
    prompts: tuple[PromptKind, ...]
    output_dir: Path
    name: str = "run"
    per_class: int | None = None
    sample_seed: int = 0
    batch_size: int = DEFAULT_BATCH_SIZE
    tie_break: TieBreakPolicy = TieBreakPolicy()
    fallback: Label = Label.PHISHING
    cache_path: Path | None = None
    parallelism: int = 1
    templates_dir: Path | None = None
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def spec(self) -> EnsembleSpec:
        return EnsembleSpec(self.strategy, tuple(m.model_id for m in self.models), self.prompts,
                            self.tie_break, self.batch_size, self.parallelism, self.fallback)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_MOCK_KEYS = {"accuracy", "abstain_rate", "seed"}
_HTTP_KEYS = {"adapter", "endpoint", "model", "api_key_env", "rate", "burst", "max_attempts",
              "base_backoff", "backoff_multiplier", "timeout", "max_concurrency"}


def _model_entry(raw: Mapping[str, Any]) -> ModelEntry:
    try:
        name = str(raw["name"])
        kind = ProviderKind(raw.get("provider", "mock"))
    except KeyError:
        raise ConfigError("every [[models]] entry needs a name") from None
    except ValueError:
        raise ConfigError(f"model {raw.get('name')!r}: unknown provider {raw.get('provider')!r}") from None
    options = {k: v for k, v in raw.items() if k not in ("name", "provider")}
    allowed = {ProviderKind.MOCK: _MOCK_KEYS, ProviderKind.REMOTE_HTTP: _HTTP_KEYS, ProviderKind.REPLAY: set()}[kind]
    unknown = set(options) - allowed
    if unknown:
        raise ConfigError(f"model {name!r}: unknown option(s) {sorted(unknown)} for provider {kind.value}")
    if kind is ProviderKind.MOCK:
        try:
            MockBehavior(float(options.get("accuracy", 1.0)), float(options.get("abstain_rate", 0.0)),
                         int(options.get("seed", 0)))
        except ValueError as exc:
            raise ConfigError(f"model {name!r}: {exc}") from None
    if kind is ProviderKind.REMOTE_HTTP:
        for key in ("endpoint", "api_key_env"):
            if key not in options:
                raise ConfigError(f"model {name!r}: http provider needs {key!r}")
        if options.get("adapter", "openai") not in ADAPTERS:
            raise ConfigError(f"model {name!r}: unknown adapter {options['adapter']!r}")
    return ModelEntry(name, kind, options)


def parse_config(doc: Mapping[str, Any], base_dir: Path) -> RunConfig:
    def path(key: str, required: bool = False) -> Path | None:
        value = doc.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config is missing {key!r}")
            return None
        p = Path(value)
        return (p if p.is_absolute() else base_dir / p).resolve()

    try:
        strategy = StrategyKind(doc.get("strategy", "single"))
        prompts = tuple(PromptKind(p) for p in doc.get("prompts", ["zero-shot"]))
        tie_break = TieBreakPolicy.parse(str(doc.get("tie_break", "fail-safe-phishing")))
        fallback = Label.parse(str(doc.get("fallback", "phishing")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    models = tuple(_model_entry(m) for m in doc.get("models", []))
    if not models:
        raise ConfigError("config lists no models")
    per_class = doc.get("per_class")
    return RunConfig(
        dataset_path=path("dataset_path", required=True),
        strategy=strategy,
        models=models,
        prompts=prompts,
        output_dir=path("output_dir") or base_dir / "runs" / str(doc.get("name", "run")),
        name=str(doc.get("name", "run")),
        per_class=None if per_class is None else int(per_class),
        sample_seed=int(doc.get("sample_seed", 0)),
        batch_size=int(doc.get("batch_size", DEFAULT_BATCH_SIZE)),
        tie_break=tie_break,
        fallback=fallback,
        cache_path=path("cache_path"),
        parallelism=int(doc.get("parallelism", 1)),
        templates_dir=path("templates_dir"),
        temperature=float(doc.get("temperature", 0.0)),
        max_output_tokens=int(doc.get("max_output_tokens", 2048)),
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(raw)
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(doc, path.resolve().parent)


def validate(cfg: RunConfig) -> None:
    """Resolve every file and model reference before any request is issued."""
    cfg.spec()
    if not cfg.dataset_path.is_file():
        raise ConfigError(f"dataset not found: {cfg.dataset_path}")
    if cfg.templates_dir is not None and not cfg.templates_dir.is_dir():
        raise ConfigError(f"templates_dir not found: {cfg.templates_dir}")
    for m in cfg.models:
        if m.provider is ProviderKind.REPLAY and (cfg.cache_path is None or not cfg.cache_path.is_file()):
            raise ConfigError(f"model {m.name!r} replays from cache_path, which is missing")
        if m.provider is ProviderKind.REMOTE_HTTP and not os.environ.get(m.options["api_key_env"]):
            raise ConfigError(f"model {m.name!r}: environment variable {m.options['api_key_env']} is not set")


def load_dataset(cfg: RunConfig) -> Dataset:
    ds = load_csv(cfg.dataset_path)
    if cfg.per_class is not None:
        ds = balanced_subsample(ds, cfg.per_class, cfg.sample_seed)
    return ds


def build_providers(cfg: RunConfig, ds: Dataset) -> tuple[dict[str, Provider], ResponseCache | None]:
    cache = ResponseCache(cfg.cache_path) if cfg.cache_path is not None else None
    truths = {s.url: s.truth for s in ds}
    providers: dict[str, Provider] = {}
    for m in cfg.models:
        o = m.options
        if m.provider is ProviderKind.MOCK:
            behavior = MockBehavior(float(o.get("accuracy", 1.0)), float(o.get("abstain_rate", 0.0)),
                                    int(o.get("seed", 0)))
            inner: Provider | None = MockProvider(behavior, truths)
        elif m.provider is ProviderKind.REMOTE_HTTP:
            limiter = TokenBucket(float(o["rate"]), int(o.get("burst", 1))) if "rate" in o else None
            retry = RetryPolicy(int(o.get("max_attempts", 5)), float(o.get("base_backoff", 1.0)),
                                float(o.get("backoff_multiplier", 2.0)))
            inner = HttpProvider(o["endpoint"], o.get("model", m.name), o["api_key_env"],
                                 adapter=o.get("adapter", "openai"), retry=retry, limiter=limiter,
                                 max_concurrency=int(o.get("max_concurrency", cfg.parallelism)),
                                 timeout=float(o.get("timeout", 120.0)))
        else:
            inner = None
        if cache is not None:
            providers[m.name] = ReplayProvider(cache, inner)
        elif inner is None:
            raise ConfigError(f"model {m.name!r} replays from cache_path, which is not configured")
        else:
            providers[m.name] = inner
    return providers, cache
