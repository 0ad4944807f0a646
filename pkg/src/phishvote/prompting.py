"""Batch classification prompts and the numbered-line response grammar.

A template file is UTF-8 text made of an optional front matter and a body,
separated by a line holding only ``---``::

    exemplar: phishing http://paypal.com.account-security-check.example/login
    ---
    <instruction text>
    {{exemplars}}
    <optional list header>
    {{url_list}}
    <response format clause>

Models are asked to answer with one ``<index>. <phishing|legitimate>`` line
per URL; :func:`parse_batch_response` reads that back, degrading anything it
cannot read to :attr:`Vote.ABSTAIN`.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from phishvote.dataset import Batch
from phishvote.errors import ExemplarLeakage, ExemplarMismatch, TemplateError
from phishvote.vote import Label, Vote

EXEMPLARS_MARKER = "{{exemplars}}"
URL_LIST_MARKER = "{{url_list}}"


class PromptKind(enum.Enum):
    ZERO_SHOT = "zero-shot"
    ONE_SHOT = "one-shot"
    TWO_SHOT = "two-shot"

    @property
    def n_exemplars(self) -> int:
        return {"zero-shot": 0, "one-shot": 1, "two-shot": 2}[self.value]

    @property
    def filename(self) -> str:
        return self.value.replace("-", "_") + ".txt"


@dataclass(frozen=True)
class Exemplar:
    url: str
    label: Label


@dataclass(frozen=True)
class PromptTemplate:
    kind: PromptKind
    instruction_text: str
    exemplars: tuple[Exemplar, ...] = ()
    response_format_clause: str = ""
    list_header: str = ""

    def validate(self) -> None:
        if not self.instruction_text.strip() or not self.response_format_clause.strip():
            raise TemplateError(f"{self.kind.value}: instruction and response format clause must be non-empty")
        n = self.kind.n_exemplars
        if len(self.exemplars) != n:
            raise ExemplarMismatch(f"{self.kind.value} needs {n} exemplar(s), got {len(self.exemplars)}")
        if n == 2 and {e.label for e in self.exemplars} != {Label.PHISHING, Label.LEGITIMATE}:
            raise ExemplarMismatch("two-shot exemplars must contain one phishing and one legitimate URL")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    url_count: int
    component_prompt: PromptKind


def format_response(labels: Iterable[Label | Vote]) -> str:
    """The answer a perfectly compliant model would give."""
    return "\n".join(f"{i}. {lab.value}" for i, lab in enumerate(labels, start=1))


def _numbered(urls: Iterable[str]) -> str:
    return "\n".join(f"{i}. {u}" for i, u in enumerate(urls, start=1))


def _exemplar_block(exemplars: Sequence[Exemplar]) -> str:
    if not exemplars:
        return ""
    return "\n".join([
        "Example URLs:",
        _numbered(e.url for e in exemplars),
        "Example answer:",
        format_response(e.label for e in exemplars),
    ])


def render_batch_prompt(tpl: PromptTemplate, batch: Batch) -> RenderedPrompt:
    if not batch.samples:
        raise ValueError("cannot render a prompt for an empty batch")
    tpl.validate()
    url_block = _numbered(s.url for s in batch.samples)
    if tpl.list_header:
        url_block = tpl.list_header + "\n" + url_block
    blocks = [tpl.instruction_text, _exemplar_block(tpl.exemplars), url_block, tpl.response_format_clause]
    text = "\n\n".join(b for b in blocks if b)
    return RenderedPrompt(text=text, url_count=len(batch.samples), component_prompt=tpl.kind)


# Markdown emphasis/code characters are dropped anywhere in a line; quote,
# heading and bullet markers only at its start.
_INLINE_DECOR = str.maketrans("", "", "*_`")
_LEADING_DECOR = re.compile(r"^(?:[>#+\-]+\s*)+")
_ANSWER_LINE = re.compile(r"^(\d+)\s*\.\s*(phishing|legitimate)[^\w]*$", re.IGNORECASE)


def parse_answer_line(line: str) -> tuple[int, Label] | None:
    cleaned = _LEADING_DECOR.sub("", line.translate(_INLINE_DECOR).strip()).strip()
    m = _ANSWER_LINE.match(cleaned)
    if m is None:
        return None
    return int(m.group(1)), Label(m.group(2).lower())


def parse_batch_response(text: str | bytes, expected_count: int) -> list[Vote]:
    """Map a model response to exactly ``expected_count`` votes. Never raises."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    votes = [Vote.ABSTAIN] * max(expected_count, 0)
    assigned = [False] * len(votes)
    for line in (text or "").splitlines():
        parsed = parse_answer_line(line)
        if parsed is None:
            continue
        k, label = parsed
        if 1 <= k <= expected_count and not assigned[k - 1]:
            votes[k - 1] = Vote.of(label)
            assigned[k - 1] = True
    return votes


def parse_template(text: str, kind: PromptKind) -> PromptTemplate:
    head, sep, body = text.partition("\n---\n")
    if not sep:
        if text.startswith("---\n"):
            head, body = "", text[4:]
        else:
            head, body = "", text
    exemplars = []
    for raw in head.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(":")
        if key.strip() != "exemplar":
            raise TemplateError(f"unknown front-matter key {key!r}")
        try:
            label_text, url = rest.split(None, 1)
            exemplars.append(Exemplar(url.strip(), Label.parse(label_text)))
        except ValueError:
            raise TemplateError(f"bad exemplar line {line!r}; expected 'exemplar: <label> <url>'") from None
    if body.count(EXEMPLARS_MARKER) != 1 or body.count(URL_LIST_MARKER) != 1:
        raise TemplateError(f"template body needs exactly one {EXEMPLARS_MARKER} and one {URL_LIST_MARKER}")
    instruction, rest = body.split(EXEMPLARS_MARKER)
    if URL_LIST_MARKER not in rest:
        raise TemplateError(f"{EXEMPLARS_MARKER} must precede {URL_LIST_MARKER}")
    header, clause = rest.split(URL_LIST_MARKER)
    tpl = PromptTemplate(
        kind=kind,
        instruction_text=instruction.strip(),
        exemplars=tuple(exemplars),
        response_format_clause=clause.strip(),
        list_header=header.strip(),
    )
    tpl.validate()
    return tpl


def load_template(path: str | Path, kind: PromptKind) -> PromptTemplate:
    return parse_template(Path(path).read_text(encoding="utf-8"), kind)


def default_templates() -> dict[PromptKind, PromptTemplate]:
    root = resources.files("phishvote") / "templates"
    return {k: parse_template((root / k.filename).read_text(encoding="utf-8"), k) for k in PromptKind}


def load_templates(directory: str | Path | None = None) -> dict[PromptKind, PromptTemplate]:
    """Shipped templates, overridden by any ``<kind>.txt`` found in ``directory``."""
    templates = default_templates()
    if directory is not None:
        for kind in PromptKind:
            path = Path(directory) / kind.filename
            if path.exists():
                templates[kind] = load_template(path, kind)
    return templates


def check_leakage(templates: Mapping[PromptKind, PromptTemplate] | Iterable[PromptTemplate], urls: Iterable[str]) -> None:
    """Reject configurations whose exemplars also appear in the evaluation data."""
    tpls = templates.values() if isinstance(templates, Mapping) else templates
    url_set = set(urls)
    leaked = sorted({e.url for t in tpls for e in t.exemplars if e.url in url_set})
    if leaked:
        raise ExemplarLeakage(f"exemplar URL(s) present in the evaluation dataset: {', '.join(leaked)}")
