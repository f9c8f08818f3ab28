"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class McAffectError(Exception):
    """Base class for all errors raised by mcaffect."""


# dialogue ingest


class DialogueError(McAffectError, ValueError):
    """Malformed or invalid dialogue transcript."""


class UnknownRoleError(DialogueError):
    pass


class EmptyUtteranceError(DialogueError):
    pass


class TooFewTurnsError(DialogueError):
    pass


# prompt / trial parsing


class TrialParseError(McAffectError):
    """A model response violated the scoring output contract.

    Any instance rejects the whole trial.
    """

    code = "invalid"

    def __init__(self, message: str, index: int | None = None, value=None):
        super().__init__(message)
        self.index = index
        self.value = value


class NotJson(TrialParseError):
    code = "not_json"


class MalformedLine(TrialParseError):
    code = "malformed_line"


class UnexpectedIndex(TrialParseError):
    code = "unexpected_index"


class MissingIndex(TrialParseError):
    code = "missing_index"


class DuplicateIndex(TrialParseError):
    code = "duplicate_index"


class OutOfOrder(TrialParseError):
    code = "out_of_order"


class SpeakerMismatch(TrialParseError):
    code = "speaker_mismatch"


class ScoreOffGrid(TrialParseError):
    code = "score_off_grid"


class ScoreOutOfRange(TrialParseError):
    code = "score_out_of_range"


# provider gateway


class ProviderError(McAffectError):
    def __init__(self, message: str, trial_log: list | None = None):
        super().__init__(message)
        self.trial_log = list(trial_log or [])


class AuthError(ProviderError):
    pass


class TransportError(ProviderError):
    pass


class InsufficientTrials(ProviderError):
    pass


# estimation / analysis


class EstimationError(McAffectError, ValueError):
    pass


class TooFewTrials(EstimationError):
    pass


class AlignmentError(EstimationError):
    pass


class AnalysisInfeasible(McAffectError):
    """No lag of the correlogram is defined."""


class ReportMismatch(McAffectError, ValueError):
    """Reports passed to a summary do not describe the same dialogue."""
