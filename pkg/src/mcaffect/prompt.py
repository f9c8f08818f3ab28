"""Prompt assembly and strict parsing of scoring responses."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .dialogue import Dialogue, Role
from .errors import (
    DuplicateIndex,
    MalformedLine,
    MissingIndex,
    NotJson,
    OutOfOrder,
    ScoreOffGrid,
    ScoreOutOfRange,
    SpeakerMismatch,
    UnexpectedIndex,
)

RUBRIC_RESOURCE = "rubric_v1.txt"
MAX_HALF_UNITS = 10  # 5.0 on the 0.5 grid


def load_rubric(path: str | Path | None = None) -> str:
    """Return the scoring rubric text, the packaged one unless ``path`` is given."""
    if path is not None:
        return Path(path).read_text(encoding="utf-8")
    return resources.files("mcaffect").joinpath("data", RUBRIC_RESOURCE).read_text(encoding="utf-8")


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PromptAssembly:
    rubric_text: str
    rendered_dialogue: str
    dialogue: Dialogue = field(compare=False, repr=False)

    @property
    def full_input(self) -> str:
        return self.rubric_text + self.rendered_dialogue

    @property
    def content_hash(self) -> str:
        return digest(self.full_input)

    @property
    def rubric_hash(self) -> str:
        return digest(self.rubric_text)


def render_dialogue(d: Dialogue) -> str:
    return "".join(f"{u.index}. {u.role.value}: {u.text}\n" for u in d.utterances)


def build_prompt(d: Dialogue, rubric: str | None = None) -> PromptAssembly:
    if not d.utterances:
        raise ValueError("cannot build a prompt for an empty dialogue")
    rubric_text = load_rubric() if rubric is None else rubric
    if not rubric_text.endswith("\n"):
        rubric_text += "\n"
    return PromptAssembly(rubric_text, render_dialogue(d), d)


@dataclass(frozen=True)
class ScoredLine:
    index: int
    speaker: Role
    half_units: int  # score * 2, exact on the rubric lattice
    text: str = ""

    @property
    def score(self) -> float:
        return self.half_units / 2

    @property
    def exact_score(self) -> Fraction:
        return Fraction(self.half_units, 2)

    def to_dict(self) -> dict:
        return {"index": self.index, "speaker": self.speaker.value, "score": self.score, "text": self.text}


@dataclass(frozen=True)
class TrialResult:
    trial_id: int
    lines: tuple[ScoredLine, ...]
    raw_response: str = field(default="", compare=False, repr=False)

    def half_units_by_index(self) -> dict[int, int]:
        return {ln.index: ln.half_units for ln in self.lines}


def serialize_trial(t: TrialResult) -> str:
    return json.dumps([ln.to_dict() for ln in t.lines], ensure_ascii=False)


_FENCE_RE = re.compile(r"^```[A-Za-z0-9_-]*[ \t]*\n?(.*?)\n?[ \t]*```$", re.DOTALL)


def _reject_constant(name: str):
    raise ValueError(f"non-finite constant {name}")


def _extract_array(raw: str) -> list:
    body = raw.strip()
    m = _FENCE_RE.match(body)
    if m:
        body = m.group(1).strip()
    try:
        data = json.loads(body, parse_constant=_reject_constant)
    except (json.JSONDecodeError, ValueError) as exc:
        raise NotJson(f"response is not a bare JSON array: {exc}") from None
    if not isinstance(data, list):
        raise NotJson("response JSON is not an array")
    return data


def _half_units(index: int, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedLine(f"index {index}: score must be a number", index, value)
    if not math.isfinite(value):
        raise MalformedLine(f"index {index}: non-finite score", index, value)
    if value < 0 or value > 5:
        raise ScoreOutOfRange(f"index {index}: score {value} outside [0, 5]", index, value)
    doubled = Fraction(value) * 2
    if doubled.denominator != 1:
        raise ScoreOffGrid(f"index {index}: score {value} not on the 0.5 grid", index, value)
    return int(doubled)


def parse_trial(raw: str, d: Dialogue, trial_id: int) -> TrialResult:
    """Validate one model response against the scoring contract.

    The response must be a single JSON array (optionally wrapped in a code
    fence) with exactly one object per scorable utterance, in index order.
    Any violation raises a :class:`~mcaffect.errors.TrialParseError` subclass
    and the whole trial is rejected.
    """
    items = _extract_array(raw)
    expected = d.by_index()
    lines: list[ScoredLine] = []
    seen: set[int] = set()
    prev = -1
    for pos, item in enumerate(items):
        if not isinstance(item, dict):
            raise MalformedLine(f"element #{pos} is not an object")
        index = item.get("index")
        if isinstance(index, bool) or not isinstance(index, int):
            raise MalformedLine(f"element #{pos}: 'index' must be an integer", value=index)
        if index not in expected:
            raise UnexpectedIndex(f"index {index} is not a scorable utterance", index)
        if index in seen:
            raise DuplicateIndex(f"index {index} appears twice", index)
        if index < prev:
            raise OutOfOrder(f"index {index} follows {prev}", index)
        speaker = item.get("speaker")
        if not isinstance(speaker, str) or speaker.strip().lower() != expected[index].role.value:
            raise SpeakerMismatch(f"index {index}: speaker {speaker!r} does not match", index, speaker)
        if "score" not in item:
            raise MalformedLine(f"index {index}: missing 'score'", index)
        half = _half_units(index, item["score"])
        text = item.get("text", "")
        if not isinstance(text, str):
            raise MalformedLine(f"index {index}: 'text' must be a string", index)
        seen.add(index)
        prev = index
        lines.append(ScoredLine(index, expected[index].role, half, text))
    for index in expected:
        if index not in seen:
            raise MissingIndex(f"index {index} not scored", index)
    return TrialResult(trial_id, tuple(lines), raw)
