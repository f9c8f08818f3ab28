"""Monte Carlo affect trajectories and dyadic dynamics for teacher-student dialogues."""

from .dialogue import Dialogue, Role, Utterance, load_dialogue, parse_dialogue, strip_sentinels
from .dynamics import Correlogram, SlopeIndicator, Typology, analyze, classify, nccf, slope
from .estimator import AffectEstimate, DyadTrajectories, Trajectory, estimate, kde_profile, map_polarity
from .gateway import MockSpec, SamplerConfig, TrialBatch, run_trials
from .prompt import PromptAssembly, TrialResult, build_prompt, parse_trial

__version__ = "0.1.0"

__all__ = [
    "AffectEstimate",
    "Correlogram",
    "Dialogue",
    "DyadTrajectories",
    "MockSpec",
    "PromptAssembly",
    "Role",
    "SamplerConfig",
    "SlopeIndicator",
    "Trajectory",
    "TrialBatch",
    "TrialResult",
    "Typology",
    "Utterance",
    "analyze",
    "build_prompt",
    "classify",
    "estimate",
    "kde_profile",
    "load_dialogue",
    "map_polarity",
    "nccf",
    "parse_dialogue",
    "parse_trial",
    "run_trials",
    "slope",
    "strip_sentinels",
]
