"""Exception hierarchy shared across the workbench.

Every error carries a stable ``code`` string so the CLI and HTTP layers can
emit single-line machine-parseable errors without string matching.
"""

from __future__ import annotations


class WorkbenchError(Exception):
    """Base class; ``code`` is stable across releases."""

    code = "WorkbenchError"

    def payload(self) -> dict:
        return {"error": self.code, "detail": str(self)}


class EmptyCorpus(WorkbenchError):
    code = "EmptyCorpus"


class MalformedRecord(WorkbenchError):
    """A raw message record failed validation; ``index`` is the 0-based record position."""

    code = "MalformedRecord"

    def __init__(self, index: int, reason: str):
        super().__init__(f"record {index}: {reason}")
        self.index = index
        self.reason = reason


class ReplayMiss(WorkbenchError):
    code = "ReplayMiss"


class ProviderError(WorkbenchError):
    """Upstream provider failed after retries; ``status`` holds the last status detail."""

    code = "ProviderError"

    def __init__(self, message: str, status: str | None = None):
        super().__init__(message)
        self.status = status


class MissingMetadata(WorkbenchError):
    code = "MissingMetadata"


class ParseFailure(WorkbenchError):
    """Model output was not parseable after one reprompt. Recorded, never raised mid-batch."""

    code = "ParseFailure"

    def __init__(self, unit_id: str, detail: str):
        super().__init__(f"{unit_id}: {detail}")
        self.unit_id = unit_id


class TooFewMessages(WorkbenchError):
    code = "TooFewMessages"


class SampleTooLarge(WorkbenchError):
    code = "SampleTooLarge"


class UnknownSession(WorkbenchError):
    code = "UnknownSession"


class UnknownReviewer(WorkbenchError):
    code = "UnknownReviewer"


class UnknownTarget(WorkbenchError):
    """Decision or label refers to a merged code, raw code, or codebook not in the project."""

    code = "UnknownTarget"


class PrematureConsensus(WorkbenchError):
    """Consensus write attempted before two reviewers decided the same key."""

    code = "PrematureConsensus"


class RoundIncomplete(WorkbenchError):
    code = "RoundIncomplete"


class IllegalValue(WorkbenchError):
    code = "IllegalValue"


class LengthMismatch(WorkbenchError):
    code = "LengthMismatch"


class Empty(WorkbenchError):
    code = "Empty"


class MissingConsensus(WorkbenchError):
    """Unique-coverage tally requested with consensus gaps; ``gaps`` lists (merged_code_id, coder_id)."""

    code = "MissingConsensus"

    def __init__(self, gaps: list[tuple[str, str]]):
        shown = ", ".join(f"{m}/{c}" for m, c in gaps[:5])
        more = "" if len(gaps) <= 5 else f" (+{len(gaps) - 5} more)"
        super().__init__(f"missing consensus decisions: {shown}{more}")
        self.gaps = gaps
