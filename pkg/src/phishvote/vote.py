"""Majority-vote semantics shared by every ensemble strategy and the simulator.

Abstentions never count toward either side. Ties among valid votes are
resolved by a :class:`TieBreakPolicy`.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

from phishvote.errors import NoValidVotes


class Label(enum.Enum):
    PHISHING = "phishing"
    LEGITIMATE = "legitimate"

    @classmethod
    def parse(cls, text: str) -> "Label":
        return cls(text.strip().lower())

    def flipped(self) -> "Label":
        return Label.LEGITIMATE if self is Label.PHISHING else Label.PHISHING


class Vote(enum.Enum):
    """A single component's answer for one URL.

    The component that cast the vote is identified by its column in the
    vote matrix, so the enum itself carries no source.
    """

    PHISHING = "phishing"
    LEGITIMATE = "legitimate"
    ABSTAIN = "abstain"

    @classmethod
    def of(cls, label: Label) -> "Vote":
        return cls(label.value)

    @property
    def label(self) -> Label | None:
        return None if self is Vote.ABSTAIN else Label(self.value)


class TieBreak(enum.Enum):
    FAIL_SAFE_PHISHING = "fail-safe-phishing"
    FAIL_OPEN_LEGITIMATE = "fail-open-legitimate"
    SEEDED_RANDOM = "seeded-random"
    FIRST_LISTED_COMPONENT = "first-listed"


@dataclass(frozen=True)
class TieBreakPolicy:
    kind: TieBreak = TieBreak.FAIL_SAFE_PHISHING
    seed: int = 0

    @classmethod
    def parse(cls, text: str) -> "TieBreakPolicy":
        """Parse ``fail-safe-phishing``, ``fail-open-legitimate``,
        ``first-listed`` or ``seeded-random:<seed>``."""
        name, _, arg = text.strip().partition(":")
        kind = TieBreak(name)
        if kind is TieBreak.SEEDED_RANDOM:
            return cls(kind, int(arg) if arg else 0)
        if arg:
            raise ValueError(f"tie-break {name!r} takes no argument")
        return cls(kind)

    def __str__(self) -> str:
        if self.kind is TieBreak.SEEDED_RANDOM:
            return f"{self.kind.value}:{self.seed}"
        return self.kind.value


FAIL_SAFE_PHISHING = TieBreakPolicy(TieBreak.FAIL_SAFE_PHISHING)
FAIL_OPEN_LEGITIMATE = TieBreakPolicy(TieBreak.FAIL_OPEN_LEGITIMATE)
FIRST_LISTED_COMPONENT = TieBreakPolicy(TieBreak.FIRST_LISTED_COMPONENT)


def seeded_random(seed: int) -> TieBreakPolicy:
    return TieBreakPolicy(TieBreak.SEEDED_RANDOM, seed)


@dataclass(frozen=True)
class Tally:
    phishing_count: int = 0
    legitimate_count: int = 0
    abstain_count: int = 0

    @property
    def valid(self) -> int:
        return self.phishing_count + self.legitimate_count

    @property
    def total(self) -> int:
        return self.valid + self.abstain_count


def tally(votes: Iterable[Vote]) -> Tally:
    p = l = a = 0
    for v in votes:
        if v is Vote.PHISHING:
            p += 1
        elif v is Vote.LEGITIMATE:
            l += 1
        else:
            a += 1
    return Tally(p, l, a)


def _coin(seed: int, t: Tally, salt: str) -> Label:
    # Abstain count is deliberately excluded so abstentions stay neutral.
    key = f"{seed}|{t.phishing_count}|{t.legitimate_count}|{salt}".encode()
    return Label.PHISHING if hashlib.sha256(key).digest()[0] & 1 else Label.LEGITIMATE


def majority_vote(votes: Sequence[Vote], policy: TieBreakPolicy = FAIL_SAFE_PHISHING, salt: str = "") -> Label:
    """Return the label holding a strict majority of non-abstain votes.

    ``salt`` only affects :attr:`TieBreak.SEEDED_RANDOM`; the ensemble engine
    passes the row position so that ties on different URLs get independent
    coins while staying reproducible.

    Raises:
        NoValidVotes: every vote is an abstention (or ``votes`` is empty).
    """
    t = tally(votes)
    if t.valid == 0:
        raise NoValidVotes(f"all {t.abstain_count} votes abstained")
    if t.phishing_count > t.legitimate_count:
        return Label.PHISHING
    if t.legitimate_count > t.phishing_count:
        return Label.LEGITIMATE
    kind = policy.kind
    if kind is TieBreak.FAIL_SAFE_PHISHING:
        return Label.PHISHING
    if kind is TieBreak.FAIL_OPEN_LEGITIMATE:
        return Label.LEGITIMATE
    if kind is TieBreak.SEEDED_RANDOM:
        return _coin(policy.seed, t, salt)
    return next(v.label for v in votes if v is not Vote.ABSTAIN)
