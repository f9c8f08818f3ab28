"""report.json construction, validation, offline recomputation and sweep summaries."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema

from .dialogue import Role
from .dynamics import DyadAnalysis, Typology, analyze, classify
from .errors import ReportMismatch
from .estimator import KDE_BANDWIDTH_FLOOR, KDE_BANDWIDTH_RULE, DyadTrajectories, Trajectory

SCHEMA_VERSION = "1.0"


def build_report(
    trajs: DyadTrajectories,
    analysis: DyadAnalysis,
    *,
    source: str | None = None,
    canonical: bool = False,
) -> dict:
    prov = dict(trajs.provenance)
    if canonical:
        prov.pop("timestamp", None)
    corr = analysis.correlogram
    return {
        "schema_version": SCHEMA_VERSION,
        "topic": trajs.topic,
        "source": source,
        "provenance": prov,
        "settings": {
            "lag_min": corr.lag_min,
            "lag_max": corr.lag_max,
            "min_overlap": corr.min_overlap,
            "centering": corr.centering,
            "convention": corr.convention,
            "common_length": analysis.common_length,
            "kde": {"bandwidth_rule": KDE_BANDWIDTH_RULE, "bandwidth_floor": KDE_BANDWIDTH_FLOOR},
        },
        "trajectories": {
            "teacher": [p.to_dict() for p in trajs.teacher.points],
            "student": [p.to_dict() for p in trajs.student.points],
        },
        "correlogram": corr.to_dict(),
        "slopes": {
            "teacher": analysis.slope_teacher.to_dict(),
            "student": analysis.slope_student.to_dict(),
        },
        "slope_band": analysis.slope_band,
        "typology": {"label": analysis.typology.value, "interpretation": analysis.typology.interpretation},
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _schema() -> dict:
    text = resources.files("mcaffect").joinpath("data", "report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(report: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``report`` does not match the schema."""
    jsonschema.validate(report, _schema())


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def typology_from_report(report: dict) -> Typology:
    """Re-derive the typology label from the stored indicators alone."""
    c, s = report["correlogram"], report["slopes"]
    return classify(c["optimal_lag"], c["optimal_r"], s["teacher"]["beta"], s["student"]["beta"], report["slope_band"])


def trajectories_from_report(report: dict) -> DyadTrajectories:
    def traj(role: Role) -> Trajectory:
        pts = report["trajectories"][role.value]
        return Trajectory.from_values(
            role, [p["std_mean"] for p in pts], [p["turn"] for p in pts], [p["std_variance"] for p in pts]
        )

    return DyadTrajectories(traj(Role.TEACHER), traj(Role.STUDENT), report["topic"], report["provenance"])


def reanalyze_report(report: dict) -> DyadAnalysis:
    """Recompute correlogram, slopes and typology from the stored trajectories."""
    st = report["settings"]
    return analyze(
        trajectories_from_report(report),
        st["lag_min"],
        st["lag_max"],
        st["min_overlap"],
        report["slope_band"],
        centering=st["centering"],
        convention=st["convention"],
        common_length=st["common_length"],
    )


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSummary:
    temperatures: tuple[float, ...]
    rows: tuple[dict, ...]  # one per utterance
    max_deviation: tuple[float, ...]  # one per report column

    def utterance(self, index: int) -> dict:
        for row in self.rows:
            if row["utterance_index"] == index:
                return row
        raise KeyError(index)

    def to_dict(self) -> dict:
        return {
            "temperatures": list(self.temperatures),
            "rows": list(self.rows),
            "max_deviation": list(self.max_deviation),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        taus = [f"{t:g}" for t in self.temperatures]
        w.writerow(
            ["utterance_index", "role"]
            + [f"std_mean@{t}" for t in taus]
            + [f"std_variance@{t}" for t in taus]
            + ["mean_min", "mean_max"]
        )
        for row in self.rows:
            w.writerow(
                [row["utterance_index"], row["role"]]
                + [repr(x) for x in row["std_mean"]]
                + [repr(x) for x in row["std_variance"]]
                + [repr(row["mean_min"]), repr(row["mean_max"])]
            )
        w.writerow(["max_deviation", ""] + [repr(x) for x in self.max_deviation] + [""] * (len(taus) + 2))
        return buf.getvalue()


def _points(report: dict) -> dict[int, dict]:
    pts = report["trajectories"]["teacher"] + report["trajectories"]["student"]
    return {p["utterance_index"]: p for p in pts}


def sweep_summary(reports: Sequence[dict]) -> SweepSummary:
    """Tabulate per-utterance standardized means and variances across reports.

    The reports must describe the same dialogue and model and differ only in
    temperature. ``max_deviation[j]`` is the largest absolute mean difference
    between report ``j`` and any other report, over all utterances.
    """
    if len(reports) < 2:
        raise ReportMismatch("a sweep summary needs at least two reports")
    ref = reports[0]
    ref_pts = _points(ref)
    tables = []
    for rep in reports:
        pts = _points(rep)
        if rep["provenance"]["content_hash"] != ref["provenance"]["content_hash"]:
            raise ReportMismatch("reports were produced from different prompts/dialogues")
        if rep["provenance"]["model_name"] != ref["provenance"]["model_name"]:
            raise ReportMismatch("reports were produced by different models")
        if set(pts) != set(ref_pts):
            raise ReportMismatch("reports cover different utterances")
        tables.append(pts)
    rows = []
    for idx in sorted(ref_pts):
        means = [t[idx]["std_mean"] for t in tables]
        rows.append(
            {
                "utterance_index": idx,
                "role": ref_pts[idx]["role"],
                "std_mean": means,
                "std_variance": [t[idx]["std_variance"] for t in tables],
                "mean_min": min(means),
                "mean_max": max(means),
            }
        )
    n = len(tables)
    dev = []
    for j in range(n):
        dev.append(
            max(
                abs(row["std_mean"][j] - row["std_mean"][i])
                for row in rows
                for i in range(n)
                if i != j
            )
        )
    return SweepSummary(tuple(r["provenance"]["temperature"] for r in reports), tuple(rows), tuple(dev))
