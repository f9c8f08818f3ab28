import json

import pytest
from hypothesis import given, strategies as st

from mcaffect.dialogue import Dialogue, Role, Utterance
from mcaffect.errors import (
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
from mcaffect.prompt import (
    ScoredLine,
    TrialResult,
    build_prompt,
    load_rubric,
    parse_trial,
    serialize_trial,
)


def _one_line_dialogue():
    # bypasses the three-turn guard, which only applies to parsed transcripts
    return Dialogue("t", (Utterance(0, 0, Role.TEACHER, "Hello."),))


def _response(d, scores, **overrides):
    lines = [
        {"index": u.index, "speaker": u.role.value, "score": s, "text": u.text}
        for u, s in zip(d.utterances, scores)
    ]
    return json.dumps(lines)


def test_prompt_starts_with_rubric(personification):
    p = build_prompt(personification)
    assert p.full_input.startswith("Please act as a professional psychologist.")
    assert p.full_input == p.rubric_text + p.rendered_dialogue
    assert p.rubric_text == load_rubric()


def test_rendered_dialogue_lines(personification):
    p = build_prompt(personification)
    lines = p.rendered_dialogue.splitlines()
    assert len(lines) == 15
    assert lines[0].startswith("0. teacher: Today, we're going to learn")
    assert lines[14] == "14. teacher: You're welcome. I'm happy you found it engaging."


def test_hash_deterministic(personification):
    a, b = build_prompt(personification), build_prompt(personification)
    assert a.content_hash == b.content_hash
    assert len(a.content_hash) == 64
    other = build_prompt(personification, rubric="Score these lines.\n")
    assert other.content_hash != a.content_hash


def test_neutral_single_line():
    d = _one_line_dialogue()
    t = parse_trial('[{"index":0,"speaker":"teacher","score":2.5,"text":"..."}]', d, 3)
    assert t.trial_id == 3
    assert len(t.lines) == 1 and t.lines[0].score == 2.5 and t.lines[0].half_units == 5


def test_code_fence_tolerated():
    d = _one_line_dialogue()
    raw = '```json\n[{"index":0,"speaker":"teacher","score":1,"text":"x"}]\n```'
    assert parse_trial(raw, d, 0).lines[0].score == 1.0
    assert parse_trial("  \n" + raw + "\n\n", d, 0).lines[0].score == 1.0


@pytest.mark.parametrize("raw", [
    'Here are the scores: [{"index":0,"speaker":"teacher","score":2.5,"text":"x"}]',
    '[{"index":0,"speaker":"teacher","score":2.5,"text":"x"}] Hope this helps!',
    '{"index":0,"speaker":"teacher","score":2.5}',
    '[{"index":0,"speaker":"teacher","score":NaN,"text":"x"}]',
    "",
])
def test_not_json(raw):
    with pytest.raises(NotJson):
        parse_trial(raw, _one_line_dialogue(), 0)


def test_off_grid(personification):
    scores = [2.5] * 15
    scores[4] = 2.7
    with pytest.raises(ScoreOffGrid) as exc:
        parse_trial(_response(personification, scores), personification, 0)
    assert exc.value.index == 4 and exc.value.value == 2.7


@pytest.mark.parametrize("bad", [-0.5, 5.5, 7.3])
def test_out_of_range(personification, bad):
    scores = [2.5] * 15
    scores[2] = bad
    with pytest.raises(ScoreOutOfRange):
        parse_trial(_response(personification, scores), personification, 0)


def test_missing_index(personification):
    lines = json.loads(_response(personification, [2.5] * 15))
    del lines[7]
    with pytest.raises(MissingIndex) as exc:
        parse_trial(json.dumps(lines), personification, 0)
    assert exc.value.index == 7


def test_duplicate_index(personification):
    lines = json.loads(_response(personification, [2.5] * 15))
    lines.insert(4, dict(lines[3]))
    with pytest.raises(DuplicateIndex):
        parse_trial(json.dumps(lines), personification, 0)


def test_out_of_order(personification):
    lines = json.loads(_response(personification, [2.5] * 15))
    lines[5], lines[6] = lines[6], lines[5]
    with pytest.raises((OutOfOrder, SpeakerMismatch)):
        parse_trial(json.dumps(lines), personification, 0)
    lines = json.loads(_response(personification, [2.5] * 15))
    lines[4], lines[6] = lines[6], lines[4]  # same speaker, wrong order
    with pytest.raises(OutOfOrder):
        parse_trial(json.dumps(lines), personification, 0)


def test_speaker_mismatch(personification):
    lines = json.loads(_response(personification, [2.5] * 15))
    lines[3]["speaker"] = "teacher"
    with pytest.raises(SpeakerMismatch):
        parse_trial(json.dumps(lines), personification, 0)


def test_unexpected_index(personification):
    lines = json.loads(_response(personification, [2.5] * 15))
    lines.append({"index": 15, "speaker": "student", "score": 2.5, "text": "[End of conversation]"})
    with pytest.raises(UnexpectedIndex):
        parse_trial(json.dumps(lines), personification, 0)


@pytest.mark.parametrize("score", ["2.5", True, None])
def test_malformed_score(personification, score):
    lines = json.loads(_response(personification, [2.5] * 15))
    lines[0]["score"] = score
    with pytest.raises(MalformedLine):
        parse_trial(json.dumps(lines), personification, 0)


def test_text_echo_not_compared(personification):
    lines = json.loads(_response(personification, [2.5] * 15))
    lines[0]["text"] = "  paraphrased  "
    assert parse_trial(json.dumps(lines), personification, 0).lines[0].text == "  paraphrased  "


@given(st.lists(st.integers(min_value=0, max_value=10), min_size=15, max_size=15))
def test_round_trip(half_units):
    from mcaffect.dialogue import strip_sentinels
    from mcaffect.fixtures import load_fixture

    d = strip_sentinels(load_fixture("personification"))
    t = TrialResult(
        5, tuple(ScoredLine(u.index, u.role, h, u.text) for u, h in zip(d.utterances, half_units))
    )
    assert parse_trial(serialize_trial(t), d, 5) == t


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_no_accepted_score_off_lattice(value):
    d = _one_line_dialogue()
    raw = json.dumps([{"index": 0, "speaker": "teacher", "score": value, "text": "x"}])
    try:
        t = parse_trial(raw, d, 0)
    except (ScoreOffGrid, ScoreOutOfRange):
        return
    assert t.lines[0].score in [h / 2 for h in range(11)]
