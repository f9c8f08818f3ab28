"""Parsing and validation of dyadic teacher-student transcripts.

Two input formats are accepted:

* canonical JSON: ``{"topic": ..., "persona": {...}, "utterances": [{"index", "turn", "role", "text"}, ...]}``
* plain text: one ``Teacher: ...`` / ``Student: ...`` line per utterance, with
  optional ``# topic: ...`` and ``# <persona key>: <value>`` header lines.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, TextIO

from .errors import DialogueError, EmptyUtteranceError, TooFewTurnsError, UnknownRoleError

MIN_COMPLETE_TURNS = 3


class Role(str, enum.Enum):
    TEACHER = "teacher"
    STUDENT = "student"

    @classmethod
    def parse(cls, label: str) -> "Role":
        try:
            return cls(label.strip().lower())
        except ValueError:
            raise UnknownRoleError(f"unknown role label {label!r}") from None


@dataclass(frozen=True)
class Utterance:
    index: int
    turn: int
    role: Role
    text: str

    def to_dict(self) -> dict:
        return {"index": self.index, "turn": self.turn, "role": self.role.value, "text": self.text}


@dataclass(frozen=True)
class Dialogue:
    topic: str
    utterances: tuple[Utterance, ...]
    persona: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        object.__setattr__(self, "persona", dict(self.persona))
        _check_structure(self.utterances)

    @property
    def n_turns(self) -> int:
        return max(u.turn for u in self.utterances) + 1

    @property
    def indices(self) -> list[int]:
        return [u.index for u in self.utterances]

    def by_index(self) -> dict[int, Utterance]:
        return {u.index: u for u in self.utterances}

    def complete_turns(self) -> int:
        roles: dict[int, set] = {}
        for u in self.utterances:
            roles.setdefault(u.turn, set()).add(u.role)
        return sum(1 for r in roles.values() if len(r) == 2)

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "persona": dict(self.persona),
            "utterances": [u.to_dict() for u in self.utterances],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    def to_plain(self) -> str:
        lines = [f"# topic: {self.topic}"]
        lines += [f"# {k}: {v}" for k, v in self.persona.items()]
        lines += [f"{u.role.value.capitalize()}: {u.text}" for u in self.utterances]
        return "\n".join(lines) + "\n"


def _check_structure(utterances: tuple[Utterance, ...]) -> None:
    if not utterances:
        raise DialogueError("dialogue has no utterances")
    seen: dict[tuple[int, Role], int] = {}
    prev_index = -1
    prev_turn = 0
    for u in utterances:
        if not isinstance(u.role, Role):
            raise UnknownRoleError(f"unknown role {u.role!r}")
        if u.index < 0 or u.turn < 0:
            raise DialogueError(f"negative index/turn at utterance {u.index}")
        if u.index <= prev_index:
            raise DialogueError(f"utterance indices must be strictly increasing (at {u.index})")
        if u.turn < prev_turn:
            raise DialogueError(f"turn numbers must be non-decreasing (at index {u.index})")
        if not u.text.strip():
            raise EmptyUtteranceError(f"empty utterance text at index {u.index}")
        if (u.turn, u.role) in seen:
            raise DialogueError(f"turn {u.turn} has two {u.role.value} utterances")
        if u.role is Role.TEACHER and (u.turn, Role.STUDENT) in seen:
            raise DialogueError(f"student precedes teacher in turn {u.turn}")
        seen[(u.turn, u.role)] = u.index
        prev_index, prev_turn = u.index, u.turn


def _require_complete_turns(d: Dialogue) -> Dialogue:
    n = d.complete_turns()
    if n < MIN_COMPLETE_TURNS:
        raise TooFewTurnsError(
            f"need at least {MIN_COMPLETE_TURNS} complete teacher+student turns, got {n}"
        )
    return d


def dialogue_from_dict(data: Mapping) -> Dialogue:
    if not isinstance(data, Mapping):
        raise DialogueError("dialogue JSON must be an object")
    raw_utts = data.get("utterances")
    if not isinstance(raw_utts, list):
        raise DialogueError("dialogue JSON needs an 'utterances' array")
    utterances = []
    for pos, item in enumerate(raw_utts):
        if not isinstance(item, Mapping):
            raise DialogueError(f"utterance #{pos} is not an object")
        try:
            index, turn, role, text = item["index"], item["turn"], item["role"], item["text"]
        except KeyError as exc:
            raise DialogueError(f"utterance #{pos} lacks field {exc.args[0]!r}") from None
        for name, value in (("index", index), ("turn", turn)):
            if isinstance(value, bool) or not isinstance(value, int):
                raise DialogueError(f"utterance #{pos}: {name} must be an integer")
        if not isinstance(text, str) or not isinstance(role, str):
            raise DialogueError(f"utterance #{pos}: role and text must be strings")
        if not text.strip():
            raise EmptyUtteranceError(f"empty utterance text at index {index}")
        utterances.append(Utterance(index, turn, Role.parse(role), text))
    persona = data.get("persona") or {}
    if not isinstance(persona, Mapping):
        raise DialogueError("persona must be an object")
    return Dialogue(
        topic=str(data.get("topic", "")),
        utterances=tuple(utterances),
        persona={str(k): str(v) for k, v in persona.items()},
    )


_LINE_RE = re.compile(r"^\s*([A-Za-z][A-Za-z _-]*?)\s*:\s*(.*)$")


def _parse_plain(lines: Iterable[str]) -> Dialogue:
    topic = ""
    persona: dict[str, str] = {}
    utterances: list[Utterance] = []
    turn = -1
    turn_roles: set[Role] = set()
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            key, sep, value = line.lstrip()[1:].partition(":")
            if sep:
                key = key.strip()
                if key.lower() == "topic":
                    topic = value.strip()
                elif key:
                    persona[key] = value.strip()
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise DialogueError(f"line {lineno}: expected 'Teacher: ...' or 'Student: ...'")
        role = Role.parse(m.group(1))
        text = m.group(2).strip()
        if not text:
            raise EmptyUtteranceError(f"line {lineno}: empty utterance text")
        # a teacher line always opens a turn; a student line closes the open one
        if role is Role.TEACHER or Role.STUDENT in turn_roles or not turn_roles:
            turn += 1
            turn_roles = set()
        turn_roles.add(role)
        utterances.append(Utterance(len(utterances), turn, role, text))
    return Dialogue(topic=topic, utterances=tuple(utterances), persona=persona)


def parse_dialogue(source: str | TextIO, format: str = "json") -> Dialogue:
    """Parse a transcript into a validated :class:`Dialogue`.

    ``source`` may be a string or an open text stream. Raises
    :class:`DialogueError` (or a subclass) on malformed input, unknown role
    labels, empty utterances, or fewer than three complete turns.
    """
    text = source if isinstance(source, str) else source.read()
    if format == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DialogueError(f"invalid JSON: {exc}") from None
        d = dialogue_from_dict(data)
    elif format == "plain":
        d = _parse_plain(text.splitlines())
    else:
        raise ValueError(f"unknown dialogue format {format!r}")
    return _require_complete_turns(d)


def load_dialogue(path: str | Path) -> Dialogue:
    path = Path(path)
    fmt = "json" if path.suffix.lower() == ".json" else "plain"
    return parse_dialogue(path.read_text(encoding="utf-8"), fmt)


_SENTINEL_STRIP = re.compile(r"[\[\]()\"'.!\s]+")


def is_sentinel(text: str) -> bool:
    normalized = _SENTINEL_STRIP.sub(" ", text).strip().casefold()
    return " ".join(normalized.split()) == "end of conversation"


def strip_sentinels(d: Dialogue) -> Dialogue:
    """Drop end-of-conversation marker lines; surviving indices keep their values."""
    kept = tuple(u for u in d.utterances if not is_sentinel(u.text))
    if len(kept) == len(d.utterances):
        return d
    return Dialogue(topic=d.topic, utterances=kept, persona=d.persona)
