"""Exception hierarchy.

Every error raised on bad input derives from :class:`BiFoldError` (itself a
``ValueError``) so callers and the CLI can treat them uniformly as data errors.
"""

from __future__ import annotations


class BiFoldError(ValueError):
    """Base class for all data and contract errors raised by the package."""

    @property
    def code(self) -> str:
        return type(self).__name__


class InvalidProfile(BiFoldError):
    pass


class InvalidWeights(BiFoldError):
    pass


class DegenerateWeights(BiFoldError):
    pass


class StageMismatch(BiFoldError):
    pass


class ShapeMismatch(BiFoldError):
    pass


class MissingPredictions(BiFoldError):
    def __init__(self, instance_id: str, detail: str = "") -> None:
        self.instance_id = instance_id
        msg = f"no classification predictions for gate-passed instance {instance_id!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class DuplicateRecord(BiFoldError):
    pass


class UnknownLabel(BiFoldError):
    pass


class EmptyEvaluation(BiFoldError):
    pass


class MalformedRow(BiFoldError):
    def __init__(self, line: int, detail: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {detail}")


class ProbabilityOutOfRange(BiFoldError):
    pass


class DistributionViolation(BiFoldError):
    pass


class ManifestConflict(BiFoldError):
    pass


class ManifestIncomplete(BiFoldError):
    pass


class InvalidSpec(BiFoldError):
    pass


class InstanceMismatch(BiFoldError):
    pass
