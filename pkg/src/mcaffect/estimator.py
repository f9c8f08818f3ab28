"""Aggregation of trial scores into per-utterance affect estimates and trajectories.

Trial scores live on a half-point lattice, so means and variances are
computed exactly as fractions; float views are derived from them.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational, Real

import numpy as np

from .dialogue import Dialogue, Role
from .errors import AlignmentError, TooFewTrials
from .gateway import TrialBatch

VARIANCE_SCALE = Fraction(4, 25)  # square of the mapping slope 2/5
KDE_BANDWIDTH_FLOOR = 0.02
KDE_BANDWIDTH_RULE = "silverman"


def map_polarity(raw_score) -> Fraction:
    """Map a 0 (most positive) .. 5 (most negative) score onto [-1, 1], +1 positive."""
    if isinstance(raw_score, Rational):
        x = Fraction(raw_score)
    elif isinstance(raw_score, Real):
        x = Fraction(float(raw_score))
    else:
        raise TypeError(f"expected a number, got {type(raw_score).__name__}")
    if not 0 <= x <= 5:
        raise ValueError(f"raw score {float(x)} outside [0, 5]")
    return 1 - 2 * (x / 5)


@dataclass(frozen=True)
class AffectEstimate:
    utterance_index: int
    turn: int
    role: Role
    raw_mean: Fraction
    raw_variance: Fraction
    k_used: int
    scores: tuple[Fraction, ...] = field(default=(), repr=False)

    @property
    def std_mean(self) -> Fraction:
        return map_polarity(self.raw_mean)

    @property
    def std_variance(self) -> Fraction:
        return VARIANCE_SCALE * self.raw_variance

    @property
    def std_sd(self) -> float:
        return float(self.std_variance) ** 0.5

    def std_scores(self) -> np.ndarray:
        return np.array([float(map_polarity(s)) for s in self.scores])

    def to_dict(self) -> dict:
        return {
            "utterance_index": self.utterance_index,
            "turn": self.turn,
            "role": self.role.value,
            "raw_mean": float(self.raw_mean),
            "raw_variance": float(self.raw_variance),
            "std_mean": float(self.std_mean),
            "std_variance": float(self.std_variance),
            "k_used": self.k_used,
            "scores": [float(s) for s in self.scores],
        }


def estimate_from_scores(
    scores, utterance_index: int = 0, turn: int = 0, role: Role = Role.TEACHER
) -> AffectEstimate:
    """Sample mean and unbiased (K-1) variance of one utterance's trial scores."""
    xs = tuple(Fraction(s) if isinstance(s, Rational) else Fraction(float(s)) for s in scores)
    k = len(xs)
    if k < 2:
        raise TooFewTrials(f"utterance {utterance_index}: need >= 2 trial scores, got {k}")
    mean = sum(xs, Fraction(0)) / k
    var = sum(((x - mean) ** 2 for x in xs), Fraction(0)) / (k - 1)
    return AffectEstimate(utterance_index, turn, role, mean, var, k, xs)


@dataclass(frozen=True)
class Trajectory:
    role: Role
    points: tuple[AffectEstimate, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        turns = [p.turn for p in self.points]
        if any(b <= a for a, b in zip(turns, turns[1:])):
            raise ValueError("trajectory turns must be strictly increasing")
        if any(p.role is not self.role for p in self.points):
            raise ValueError("all trajectory points must share the trajectory role")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def turns(self) -> np.ndarray:
        return np.array([p.turn for p in self.points], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([float(p.std_mean) for p in self.points])

    @property
    def variances(self) -> np.ndarray:
        return np.array([float(p.std_variance) for p in self.points])

    @classmethod
    def from_values(cls, role: Role, values, turns=None, variances=None) -> "Trajectory":
        """Build a trajectory straight from standardized means (tests, replays)."""
        values = list(values)
        turns = list(range(len(values))) if turns is None else list(turns)
        variances = [0.0] * len(values) if variances is None else list(variances)
        points = []
        for i, (t, v, s2) in enumerate(zip(turns, values, variances)):
            raw = (1 - Fraction(float(v))) * Fraction(5, 2)
            points.append(AffectEstimate(i, int(t), role, raw, Fraction(float(s2)) / VARIANCE_SCALE, 0))
        return cls(role, tuple(points))

    def truncated(self, n: int) -> "Trajectory":
        return Trajectory(self.role, self.points[:n])


@dataclass(frozen=True)
class DyadTrajectories:
    teacher: Trajectory
    student: Trajectory
    topic: str = ""
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if abs(len(self.teacher) - len(self.student)) > 1:
            raise ValueError("teacher and student trajectories differ in length by more than one turn")

    def estimates(self) -> list[AffectEstimate]:
        return sorted(self.teacher.points + self.student.points, key=lambda p: p.utterance_index)

    def common_length(self) -> "DyadTrajectories":
        n = min(len(self.teacher), len(self.student))
        return DyadTrajectories(self.teacher.truncated(n), self.student.truncated(n), self.topic, self.provenance)


def estimate(batch: TrialBatch, d: Dialogue) -> DyadTrajectories:
    """Aggregate a trial batch into teacher and student trajectories."""
    if batch.effective_k < 2:
        raise TooFewTrials(f"need >= 2 valid trials, got {batch.effective_k}")
    indices = d.indices
    per_index: dict[int, list[Fraction]] = {i: [] for i in indices}
    for trial in batch.trials:
        got = [ln.index for ln in trial.lines]
        if got != indices:
            raise AlignmentError(f"trial {trial.trial_id} covers {got}, dialogue has {indices}")
        for ln in trial.lines:
            per_index[ln.index].append(ln.exact_score)
    teacher, student = [], []
    for u in d.utterances:
        est = estimate_from_scores(per_index[u.index], u.index, u.turn, u.role)
        (teacher if u.role is Role.TEACHER else student).append(est)
    prov = batch.provenance.to_dict()
    prov.update(requested=batch.requested, effective_k=batch.effective_k, dropped=batch.dropped)
    return DyadTrajectories(Trajectory(Role.TEACHER, teacher), Trajectory(Role.STUDENT, student), d.topic, prov)


TRAJECTORY_COLUMNS = ("turn", "role", "raw_mean", "raw_variance", "std_mean", "std_variance", "k_used")


def trajectories_csv(trajs: DyadTrajectories) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for p in trajs.estimates():
        w.writerow([p.turn, p.role.value, repr(float(p.raw_mean)), repr(float(p.raw_variance)),
                    repr(float(p.std_mean)), repr(float(p.std_variance)), p.k_used])
    return buf.getvalue()


# ---------------------------------------------------------------- KDE


@dataclass(frozen=True)
class KDEProfile:
    utterance_index: int
    grid: np.ndarray
    density: np.ndarray | None
    bandwidth: float | None
    point_mass: float | None = None

    @property
    def is_point_mass(self) -> bool:
        return self.point_mass is not None

    def local_maxima(self) -> list[float]:
        if self.density is None:
            return []
        y = self.density
        idx = [i for i in range(1, len(y) - 1) if y[i] > y[i - 1] and y[i] >= y[i + 1]]
        return [float(self.grid[i]) for i in idx]


def silverman_bandwidth(samples: np.ndarray, floor: float = KDE_BANDWIDTH_FLOOR) -> float:
    x = np.asarray(samples, dtype=float)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return max(0.9 * spread * len(x) ** -0.2, floor)


def kde_density(samples, grid, bandwidth: float | None = None) -> tuple[np.ndarray, float]:
    x = np.asarray(samples, dtype=float)
    g = np.asarray(grid, dtype=float)
    h = silverman_bandwidth(x) if bandwidth is None else bandwidth
    z = (g[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (len(x) * h * np.sqrt(2 * np.pi))
    return dens, h


def kde_profile(batch: TrialBatch, utterance_index: int, grid) -> KDEProfile:
    """Gaussian KDE of one utterance's standardized trial scores over ``grid``.

    A sample with no spread is returned as a point mass with no density.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or len(g) < 2 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be a strictly increasing 1-d sequence")
    if g[0] > -1 or g[-1] < 1:
        raise ValueError("grid must span at least [-1, 1]")
    samples = []
    for t in batch.trials:
        scores = t.half_units_by_index()
        if utterance_index not in scores:
            raise AlignmentError(f"trial {t.trial_id} has no score for utterance {utterance_index}")
        samples.append(float(map_polarity(Fraction(scores[utterance_index], 2))))
    if len(samples) < 2:
        raise TooFewTrials("KDE needs at least two trials")
    x = np.array(samples)
    if np.all(x == x[0]):
        return KDEProfile(utterance_index, g, None, None, point_mass=float(x[0]))
    dens, h = kde_density(x, g)
    return KDEProfile(utterance_index, g, dens, h)
