"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PhishVoteError(Exception):
    """Base class for every error raised by phishvote."""


class NoValidVotes(PhishVoteError):
    """Every vote for an item was an abstention."""


class IoFailure(PhishVoteError):
    pass


class MalformedRow(PhishVoteError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateUrl(PhishVoteError):
    def __init__(self, url: str):
        super().__init__(f"duplicate url: {url}")
        self.url = url


class InsufficientClass(PhishVoteError):
    def __init__(self, label, available: int, requested: int):
        super().__init__(f"need {requested} {label.value} samples, only {available} available")
        self.label = label
        self.available = available
        self.requested = requested


class ExemplarMismatch(PhishVoteError):
    pass


class ExemplarLeakage(PhishVoteError):
    pass


class TemplateError(PhishVoteError):
    pass


class ProviderError(PhishVoteError):
    pass


class ProviderUnavailable(ProviderError):
    """Retries exhausted (or a non-retryable transport failure)."""


class AuthFailure(ProviderError):
    pass


class CacheMiss(ProviderError):
    pass


class ConfigError(PhishVoteError):
    pass


class LengthMismatch(PhishVoteError):
    pass


class MissingRun(PhishVoteError):
    pass


class TruthMismatch(PhishVoteError):
    pass


class TooManyVoters(PhishVoteError):
    pass


class AccuracyOutOfRange(PhishVoteError):
    pass
