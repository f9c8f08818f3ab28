import pytest

from mcaffect.dialogue import strip_sentinels
from mcaffect.fixtures import load_fixture
from mcaffect.gateway import MockSpec, SamplerConfig, run_trials
from mcaffect.prompt import build_prompt


@pytest.fixture
def personification():
    return strip_sentinels(load_fixture("personification"))


@pytest.fixture
def run_mock():
    """Run mock trials over a dialogue with a uniform per-utterance distribution."""

    def _run(dialogue, dist, trials=20, seed=0, **cfg):
        spec = dist if isinstance(dist, MockSpec) else MockSpec(default=dist)
        cfg.setdefault("min_effective_trials", min(10, trials))
        sampler = SamplerConfig(provider="mock", trials=trials, seed=seed, **cfg)
        return run_trials(build_prompt(dialogue), sampler, spec)

    return _run
