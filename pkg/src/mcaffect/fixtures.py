"""Bundled case-study dialogues and the personification temperature-sweep table."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .dialogue import Dialogue, dialogue_from_dict
from .gateway import MockSpec

FIXTURE_NAMES = ("personification", "cold_war", "world_war_2", "respiratory_system", "achilles")
SWEEP_TABLE_NAME = "sweep-table"


def _data(*parts: str) -> str:
    return resources.files("mcaffect").joinpath("data", *parts).read_text(encoding="utf-8")


def fixture_text(name: str) -> str:
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURE_NAMES)}")
    return _data("fixtures", f"{name}.json")


def load_fixture(name: str) -> Dialogue:
    return dialogue_from_dict(json.loads(fixture_text(name)))


@lru_cache(maxsize=None)
def sweep_table() -> dict:
    """Published per-utterance standardized means/variances for personification, by temperature."""
    return json.loads(_data("temperature_sweep_personification.json"))


def sweep_means(temperature: float) -> dict[int, float]:
    table = sweep_table()
    temps = table["temperatures"]
    matches = [i for i, t in enumerate(temps) if abs(t - temperature) < 1e-9]
    if not matches:
        raise KeyError(f"no tabulated column for temperature {temperature}; have {temps}")
    col = matches[0]
    return {int(k): v[col] for k, v in table["std_mean"].items()}


def sweep_mock(temperature: float, sampling: str = "quota") -> MockSpec:
    """Mock whose per-utterance means reproduce the tabulated column at ``temperature``.

    Each utterance gets a two-point distribution on the grid points that
    bracket the target mean, i.e. a spread of at most one grid step.
    """
    return MockSpec.from_standardized_means(sweep_means(temperature), sampling=sampling)
