"""Interpersonal dynamics: lagged cross-correlation, trend slopes and typology.

Lag convention
--------------
``convention="reverse"`` (the default) pairs teacher turn ``t`` with student
turn ``t - L``; ``convention="forward"`` pairs it with student turn ``t + L``.
The reverse pairing is the one under which the reference case studies report
their optimal lags (e.g. +1 for the personification dialogue), so it is the
default; the forward pairing is kept for comparison. Either way, a lag value
is defined only over turns where both speakers have a point.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from .dialogue import Role
from .errors import AnalysisInfeasible
from .estimator import DyadTrajectories, Trajectory

log = logging.getLogger(__name__)

CONVENTIONS = ("reverse", "forward")
CENTERINGS = ("global", "overlap")
TIE_TOL = 1e-12


@dataclass(frozen=True)
class LagValue:
    lag: int
    r: float | None
    overlap: int

    @property
    def defined(self) -> bool:
        return self.r is not None


@dataclass(frozen=True)
class Correlogram:
    lag_min: int
    lag_max: int
    min_overlap: int
    values: tuple[LagValue, ...]
    optimal_lag: int
    optimal_r: float
    centering: str = "global"
    convention: str = "reverse"

    def r(self, lag: int) -> float | None:
        for v in self.values:
            if v.lag == lag:
                return v.r
        raise KeyError(lag)

    def to_dict(self) -> dict:
        return {
            "lag_min": self.lag_min,
            "lag_max": self.lag_max,
            "min_overlap": self.min_overlap,
            "centering": self.centering,
            "convention": self.convention,
            "values": [{"lag": v.lag, "r": v.r, "overlap": v.overlap} for v in self.values],
            "optimal_lag": self.optimal_lag,
            "optimal_r": self.optimal_r,
        }


def _as_series(x) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(x, Trajectory):
        return x.turns.astype(int), x.values
    vals = np.asarray(x, dtype=float)
    return np.arange(len(vals)), vals


def _pick_optimal(values: list[LagValue]) -> LagValue:
    defined = [v for v in values if v.defined]
    best = max(abs(v.r) for v in defined)
    ties = [v for v in defined if abs(v.r) >= best - TIE_TOL]
    # smaller |L| first; at equal |L| positive beats negative
    return min(ties, key=lambda v: (abs(v.lag), v.lag < 0))


def nccf(
    teacher,
    student,
    lag_min: int = -3,
    lag_max: int = 3,
    min_overlap: int = 3,
    *,
    centering: str = "global",
    convention: str = "reverse",
) -> Correlogram:
    """Normalized cross-correlation of two trajectories over integer turn lags.

    ``teacher`` and ``student`` are :class:`Trajectory` objects or plain
    sequences (position = turn). With ``centering="global"`` each series is
    centered on its full-length mean; ``"overlap"`` re-centers on the paired
    points only (a Pearson correlation per lag). Lags with fewer than
    ``min_overlap`` pairs or a zero denominator are undefined.
    """
    if not lag_min <= 0 <= lag_max:
        raise ValueError("lag window must contain 0")
    if centering not in CENTERINGS:
        raise ValueError(f"centering must be one of {CENTERINGS}")
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    if min_overlap < 2:
        raise ValueError("min_overlap must be >= 2")
    if min_overlap == 2:
        log.warning("min_overlap=2: correlations over two pairs are always +/-1")
    t_turns, t_vals = _as_series(teacher)
    s_turns, s_vals = _as_series(student)
    if len(t_vals) == 0 or len(s_vals) == 0:
        raise AnalysisInfeasible("empty trajectory")
    t_bar, s_bar = t_vals.mean(), s_vals.mean()
    s_pos = {int(t): i for i, t in enumerate(s_turns)}
    sign = -1 if convention == "reverse" else 1

    values = []
    for lag in range(lag_min, lag_max + 1):
        pairs = [(i, s_pos[int(t) + sign * lag]) for i, t in enumerate(t_turns) if int(t) + sign * lag in s_pos]
        n = len(pairs)
        r = None
        if n >= min_overlap:
            a = t_vals[[i for i, _ in pairs]]
            b = s_vals[[j for _, j in pairs]]
            if centering == "global":
                a, b = a - t_bar, b - s_bar
            else:
                a, b = a - a.mean(), b - b.mean()
            den = math.sqrt(float(a @ a) * float(b @ b))
            if den > 0:
                r = float(a @ b) / den
        values.append(LagValue(lag, r, n))
    if not any(v.defined for v in values):
        raise AnalysisInfeasible("no lag has enough overlap and non-zero variance")
    best = _pick_optimal(values)
    return Correlogram(lag_min, lag_max, min_overlap, tuple(values), best.lag, best.r, centering, convention)


def correlogram_csv(c: Correlogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "r", "overlap", "is_optimal"])
    for v in c.values:
        w.writerow([v.lag, "" if v.r is None else repr(v.r), v.overlap, int(v.lag == c.optimal_lag)])
    return buf.getvalue()


@dataclass(frozen=True)
class SlopeIndicator:
    role: Role | None
    beta: float
    n_points: int
    mean_turn: float
    mean_value: float

    def to_dict(self) -> dict:
        return {
            "role": self.role.value if self.role else None,
            "beta": self.beta,
            "n_points": self.n_points,
            "mean_turn": self.mean_turn,
            "mean_value": self.mean_value,
        }


def slope(traj, turns=None) -> SlopeIndicator:
    """Least-squares slope of standardized mean affect against turn index."""
    if isinstance(traj, Trajectory):
        t, s, role = traj.turns, traj.values, traj.role
    else:
        s = np.asarray(traj, dtype=float)
        t = np.arange(len(s), dtype=float) if turns is None else np.asarray(turns, dtype=float)
        role = None
    if len(s) < 2:
        raise ValueError("slope needs at least two points")
    t_bar, s_bar = float(t.mean()), float(s.mean())
    dt = t - t_bar
    sxx = float(dt @ dt)
    if sxx == 0:
        raise ValueError("slope undefined: all turns identical")
    beta = float(dt @ (s - s_bar)) / sxx
    return SlopeIndicator(role, beta, len(s), t_bar, s_bar)


class Typology(str, enum.Enum):
    EFFECTIVE_SCAFFOLDING = "Effective Scaffolding"
    NEGATIVE_CONTAGION = "Negative Contagion"
    UNRECIPROCATED_SUPPORT = "Unreciprocated Support"
    STUDENT_DRIVEN_SUCCESS = "Student-driven Success"
    FEEDBACK_BURNOUT = "Feedback Burnout"
    ADAPTIVE_BALANCING = "Adaptive Balancing"
    AFFECTIVE_SYNCHRONY = "Affective Synchrony"
    SHARED_FATIGUE = "Shared Fatigue"
    DYNAMIC_COMPENSATION = "Dynamic Compensation"
    UNCLASSIFIED = "Unclassified"

    @property
    def interpretation(self) -> str:
        return _INTERPRETATIONS[self]


_INTERPRETATIONS = {
    Typology.EFFECTIVE_SCAFFOLDING: "teacher-led positive contagion",
    Typology.NEGATIVE_CONTAGION: "teacher-led shared frustration",
    Typology.UNRECIPROCATED_SUPPORT: "teacher attempts to uplift student",
    Typology.STUDENT_DRIVEN_SUCCESS: "student motivates teacher",
    Typology.FEEDBACK_BURNOUT: "student leads shared decline",
    Typology.ADAPTIVE_BALANCING: "teacher regulates student frustration",
    Typology.AFFECTIVE_SYNCHRONY: "real-time mutual engagement",
    Typology.SHARED_FATIGUE: "synchronous motivation decline",
    Typology.DYNAMIC_COMPENSATION: "real-time tension balancing",
    Typology.UNCLASSIFIED: "indicator combination outside the typology",
}

# (sign of L*, sign of r*, sign of beta_T, sign of beta_S) -> label
TYPOLOGY_TABLE: dict[tuple[int, int, int, int], Typology] = {
    (1, 1, 1, 1): Typology.EFFECTIVE_SCAFFOLDING,
    (1, 1, -1, -1): Typology.NEGATIVE_CONTAGION,
    (1, -1, 1, -1): Typology.UNRECIPROCATED_SUPPORT,
    (-1, 1, 1, 1): Typology.STUDENT_DRIVEN_SUCCESS,
    (-1, 1, -1, -1): Typology.FEEDBACK_BURNOUT,
    (-1, -1, 1, -1): Typology.ADAPTIVE_BALANCING,
    (0, 1, 1, 1): Typology.AFFECTIVE_SYNCHRONY,
    (0, 1, -1, -1): Typology.SHARED_FATIGUE,
    (0, -1, 1, -1): Typology.DYNAMIC_COMPENSATION,
    (0, -1, -1, 1): Typology.DYNAMIC_COMPENSATION,
}


def _sign(x: float, band: float = 0.0) -> int:
    if x > band:
        return 1
    if x < -band:
        return -1
    return 0


def classify(
    optimal_lag: int,
    optimal_r: float,
    beta_teacher: float,
    beta_student: float,
    slope_band: float = 0.01,
) -> Typology:
    """Map the joint indicators onto the interaction typology.

    Slopes with ``|beta| <= slope_band`` count as flat; flat slopes, a zero
    correlation or any combination outside the table give ``UNCLASSIFIED``.
    """
    key = (
        _sign(optimal_lag),
        _sign(optimal_r),
        _sign(beta_teacher, slope_band),
        _sign(beta_student, slope_band),
    )
    return TYPOLOGY_TABLE.get(key, Typology.UNCLASSIFIED)


@dataclass(frozen=True)
class DyadAnalysis:
    trajectories: DyadTrajectories
    correlogram: Correlogram
    slope_teacher: SlopeIndicator
    slope_student: SlopeIndicator
    typology: Typology
    slope_band: float
    common_length: bool = False


def analyze(
    trajs: DyadTrajectories,
    lag_min: int = -3,
    lag_max: int = 3,
    min_overlap: int = 3,
    slope_band: float = 0.01,
    *,
    centering: str = "global",
    convention: str = "reverse",
    common_length: bool = False,
) -> DyadAnalysis:
    """Correlogram, slopes and typology for one pair of trajectories.

    ``common_length`` truncates both trajectories to the shorter length
    before any indicator is computed.
    """
    if slope_band < 0:
        raise ValueError("slope_band must be non-negative")
    used = trajs.common_length() if common_length else trajs
    corr = nccf(used.teacher, used.student, lag_min, lag_max, min_overlap, centering=centering, convention=convention)
    st, ss = slope(used.teacher), slope(used.student)
    label = classify(corr.optimal_lag, corr.optimal_r, st.beta, ss.beta, slope_band)
    return DyadAnalysis(used, corr, st, ss, label, slope_band, common_length)
