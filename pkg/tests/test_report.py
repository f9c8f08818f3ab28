import copy
import json
import math
import xml.etree.ElementTree as ET

import jsonschema
import pytest

from mcaffect.dynamics import analyze
from mcaffect.errors import ReportMismatch
from mcaffect.estimator import estimate
from mcaffect.fixtures import sweep_means, sweep_table
from mcaffect.pipeline import RunConfig, run
from mcaffect.plots import correlogram_svg, trajectory_svg
from mcaffect.report import (
    build_report,
    load_report,
    reanalyze_report,
    sweep_summary,
    typology_from_report,
    validate_report,
)
from mcaffect.gateway import SamplerConfig

SVG = "{http://www.w3.org/2000/svg}"
TEMPS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


@pytest.fixture
def report(personification, run_mock):
    batch = run_mock(personification, {2.0: 0.3, 2.5: 0.4, 3.0: 0.3}, seed=7)
    trajs = estimate(batch, personification)
    return build_report(trajs, analyze(trajs), source="fixture:personification")


@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = RunConfig(
        ["fixture:personification"], SamplerConfig(trials=20), out, sweep_temperatures=TEMPS,
        mock_spec="sweep-table", canonical=True,
    )
    return out, run(cfg)


def test_report_validates(report):
    validate_report(report)
    assert report["schema_version"] == "1.0"
    assert report["provenance"]["effective_k"] == 20


@pytest.mark.parametrize("mutate", [
    lambda r: r.pop("typology"),
    lambda r: r.__setitem__("schema_version", "2.0"),
    lambda r: r["correlogram"].pop("optimal_lag"),
    lambda r: r["trajectories"]["teacher"][0].__setitem__("std_mean", "high"),
])
def test_schema_rejects(report, mutate):
    bad = copy.deepcopy(report)
    mutate(bad)
    with pytest.raises(jsonschema.ValidationError):
        validate_report(bad)


def test_canonical_drops_timestamp(personification, run_mock):
    trajs = estimate(run_mock(personification, {2.0: 0.5, 3.0: 0.5}), personification)
    assert "timestamp" in build_report(trajs, analyze(trajs))["provenance"]
    assert "timestamp" not in build_report(trajs, analyze(trajs), canonical=True)["provenance"]


def test_offline_recompute(report):
    assert typology_from_report(report).value == report["typology"]["label"]
    again = reanalyze_report(json.loads(json.dumps(report)))
    assert again.correlogram.optimal_lag == report["correlogram"]["optimal_lag"]
    assert again.correlogram.optimal_r == pytest.approx(report["correlogram"]["optimal_r"], abs=1e-9)
    assert again.slope_teacher.beta == pytest.approx(report["slopes"]["teacher"]["beta"], abs=1e-12)
    assert again.typology.value == report["typology"]["label"]


def test_sweep_replays_table(sweep_run):
    out, manifest = sweep_run
    assert manifest.failures == 0 and len(manifest.report_files) == 10
    table = sweep_table()
    summary = json.loads((out / "personification" / "mock" / "sweep_summary.json").read_text())
    assert summary["temperatures"] == TEMPS
    for row in summary["rows"]:
        key = str(row["utterance_index"])
        # 20 trials resolve means to 0.01; the table has one 0.999 entry
        assert row["std_mean"] == pytest.approx(table["std_mean"][key], abs=1e-3 + 1e-12)
        # two-point mocks span one grid step, so variance is bounded, not replayed
        assert all(0 <= v <= 0.04 / 4 * 20 / 19 + 1e-12 for v in row["std_variance"])
    six = next(r for r in summary["rows"] if r["utterance_index"] == 6)
    assert (six["mean_min"], six["mean_max"]) == pytest.approx((-0.26, -0.11))


def test_sweep_summary_identity(sweep_run):
    out, manifest = sweep_run
    reports = [load_report(out / p) for p in manifest.report_files]
    s = sweep_summary([reports[0], copy.deepcopy(reports[0])])
    assert s.max_deviation == (0.0, 0.0)
    assert s.utterance(6)["std_mean"] == [sweep_means(0.1)[6]] * 2


def test_sweep_summary_mismatch(sweep_run, report):
    out, manifest = sweep_run
    a = load_report(out / manifest.report_files[0])
    with pytest.raises(ReportMismatch):
        sweep_summary([a])
    with pytest.raises(ReportMismatch):
        sweep_summary([a, report | {"provenance": report["provenance"] | {"content_hash": "x"}}])
    other = copy.deepcopy(a)
    other["provenance"]["model_name"] = "other"
    with pytest.raises(ReportMismatch):
        sweep_summary([a, other])


def _points(attr):
    return [tuple(float(v) for v in p.split(",")) for p in attr.split()]


def test_trajectory_svg(report):
    root = ET.fromstring(trajectory_svg(report))
    lines = root.findall(f".//{SVG}polyline")
    bands = root.findall(f".//{SVG}polygon")
    assert len(lines) == 2 and len(bands) == 2
    for line in lines:
        role = line.get("data-role")
        pts = report["trajectories"][role]
        assert _points(line.get("points")) == pytest.approx([(p["turn"], p["std_mean"]) for p in pts])
        band = next(b for b in bands if b.get("data-role") == role)
        upper = _points(band.get("points"))[: len(pts)]
        for (t, y), p in zip(upper, pts):
            assert y - p["std_mean"] == pytest.approx(math.sqrt(p["std_variance"]), abs=1e-9)


def test_correlogram_svg(report):
    root = ET.fromstring(correlogram_svg(report))
    bars = [r for r in root.iter(f"{SVG}rect") if "bar" in (r.get("class") or "")]
    defined = [v for v in report["correlogram"]["values"] if v["r"] is not None]
    assert len(bars) == len(defined)
    optimal = [b for b in bars if "optimal" in b.get("class")]
    assert len(optimal) == 1 and int(optimal[0].get("data-lag")) == report["correlogram"]["optimal_lag"]
