"""Labeled URL corpora: CSV ingest, balanced subsampling and batching."""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from phishvote.errors import DuplicateUrl, InsufficientClass, IoFailure, MalformedRow
from phishvote.vote import Label

DEFAULT_BATCH_SIZE = 50
DEFAULT_PER_CLASS = 500


@dataclass(frozen=True)
class UrlSample:
    url: str
    truth: Label

    def __post_init__(self):
        if not self.url:
            raise ValueError("url must be non-empty")
        if "\n" in self.url or "\r" in self.url:
            raise ValueError(f"url contains a line break: {self.url!r}")


@dataclass(frozen=True)
class Dataset:
    samples: tuple[UrlSample, ...]
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = set()
        for s in self.samples:
            if s.url in seen:
                raise DuplicateUrl(s.url)
            seen.add(s.url)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def urls(self) -> list[str]:
        return [s.url for s in self.samples]

    @property
    def truths(self) -> list[Label]:
        return [s.truth for s in self.samples]

    def count(self, label: Label) -> int:
        return sum(1 for s in self.samples if s.truth is label)


@dataclass(frozen=True)
class Batch:
    index: int
    samples: tuple[UrlSample, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.samples)


def _is_header(row: list[str]) -> bool:
    return [c.strip().lower() for c in row] == ["url", "label"]


def parse_csv(text: str, source: str = "<string>") -> Dataset:
    samples: list[UrlSample] = []
    seen: set[str] = set()
    reader = csv.reader(io.StringIO(text, newline=""))
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if not samples and line == 1 and _is_header(row):
            continue
        if len(row) != 2:
            raise MalformedRow(line, f"expected 2 columns (url,label), got {len(row)}")
        url, raw_label = row[0].strip(), row[1]
        try:
            label = Label.parse(raw_label)
        except ValueError:
            raise MalformedRow(line, f"unknown label {raw_label!r}") from None
        if not url or "\n" in url or "\r" in url:
            raise MalformedRow(line, "url is empty or contains a line break")
        if url in seen:
            raise DuplicateUrl(url)
        seen.add(url)
        samples.append(UrlSample(url, label))
    return Dataset(tuple(samples), provenance=source)


def load_csv(path: str | Path) -> Dataset:
    """Read a ``url,label`` CSV (header optional) preserving file order."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_csv(text, source=str(path))


def to_csv(ds: Dataset | Iterable[UrlSample]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["url", "label"])
    for s in ds:
        w.writerow([s.url, s.truth.value])
    return buf.getvalue()


def write_csv(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(to_csv(ds), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def balanced_subsample(ds: Dataset, per_class: int, seed: int) -> Dataset:
    """Draw ``per_class`` samples of each label without replacement.

    The draw and the final interleaving both come from one ``random.Random(seed)``
    stream, so the output (including order) is a pure function of the inputs.
    """
    if per_class < 0:
        raise ValueError("per_class must be non-negative")
    rng = random.Random(seed)
    picked: list[UrlSample] = []
    for label in (Label.PHISHING, Label.LEGITIMATE):
        pool = [s for s in ds.samples if s.truth is label]
        if len(pool) < per_class:
            raise InsufficientClass(label, len(pool), per_class)
        picked.extend(rng.sample(pool, per_class))
    rng.shuffle(picked)
    return Dataset(tuple(picked), provenance=f"{ds.provenance} per_class={per_class} seed={seed}")


def batch(ds: Dataset | Sequence[UrlSample], batch_size: int = DEFAULT_BATCH_SIZE) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    samples = tuple(ds.samples if isinstance(ds, Dataset) else ds)
    return [
        Batch(i, samples[start:start + batch_size])
        for i, start in enumerate(range(0, len(samples), batch_size))
    ]


_BRANDS = ("paypal", "apple", "amazon", "netflix", "chase", "microsoft", "dropbox", "wellsfargo")
_WORDS = ("news", "shop", "blog", "docs", "travel", "recipes", "music", "library", "weather", "maps")


def synthetic(per_class: int, seed: int = 0) -> Dataset:
    """A balanced, made-up corpus for offline demos and tests.

    Every host lives under ``.example`` / ``.test`` so nothing resolves.
    """
    rng = random.Random(seed)
    samples = []
    for i in range(per_class):
        brand = rng.choice(_BRANDS)
        token = rng.randrange(16**6)
        samples.append(UrlSample(
            f"http://{brand}.account-verify-{i}.{token:06x}.example/login?session={rng.randrange(10**6)}",
            Label.PHISHING,
        ))
        samples.append(UrlSample(
            f"https://www.{rng.choice(_WORDS)}{i}.test/{rng.choice(_WORDS)}/{token:06x}",
            Label.LEGITIMATE,
        ))
    rng.shuffle(samples)
    return Dataset(tuple(samples), provenance=f"synthetic per_class={per_class} seed={seed}")
