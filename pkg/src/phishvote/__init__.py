"""Majority-voting LLM ensembles for phishing URL classification."""

from phishvote.vote import Label, Tally, TieBreakPolicy, Vote, majority_vote, tally

__version__ = "0.1.0"

__all__ = ["Label", "Tally", "TieBreakPolicy", "Vote", "majority_vote", "tally", "__version__"]
