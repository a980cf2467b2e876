"""Persistent review workflows: blind coverage sessions, decisions,
reconciliation, and quality-label passes, with an HTTP API on top."""

from .service import ReviewService, seeded_sample
from .store import DecisionRecord, LabelRecord, ReviewStore, SessionRecord

__all__ = [
    "ReviewService",
    "ReviewStore",
    "SessionRecord",
    "DecisionRecord",
    "LabelRecord",
    "seeded_sample",
]
