"""End-to-end batch runs: ingest, score, estimate, analyze, write artifacts."""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .cache import ResponseCache
from .dialogue import Dialogue, load_dialogue, strip_sentinels
from .dynamics import analyze, correlogram_csv
from .errors import McAffectError
from .estimator import estimate, kde_profile, trajectories_csv
from .fixtures import SWEEP_TABLE_NAME, load_fixture, sweep_mock
from .gateway import MockSpec, Provider, SamplerConfig, make_provider, run_trials
from .plots import correlogram_svg, kde_svg, trajectory_svg
from .prompt import build_prompt, digest, load_rubric
from .report import SCHEMA_VERSION, atomic_write, build_report, dumps_report, sweep_summary, validate_report

log = logging.getLogger(__name__)

FIXTURE_PREFIX = "fixture:"
KDE_GRID = np.linspace(-1.5, 1.5, 601)


@dataclass
class RunConfig:
    inputs: Sequence[str]
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    out_dir: str | Path = "mcaffect-out"
    lag_min: int = -3
    lag_max: int = 3
    min_overlap: int = 3
    slope_band: float = 0.01
    centering: str = "global"
    convention: str = "reverse"
    common_length: bool = False
    sweep_temperatures: Sequence[float] | None = None
    compare_models: Sequence[str] | None = None
    emit_plots: bool = False
    canonical: bool = False
    cache_dir: str | Path | None = None
    mock_spec: MockSpec | str | None = None
    rubric_path: str | Path | None = None
    kde_utterances: Sequence[int] = ()
    provider: Provider | None = None  # overrides the provider built from ``sampler``

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("at least one input is required")
        for tau in self.sweep_temperatures or ():
            if not 0 < tau <= 2:
                raise ValueError(f"sweep temperature {tau} outside (0, 2]")
        if self.lag_min > 0 or self.lag_max < 0:
            raise ValueError("lag range must contain 0")


@dataclass
class RunRecord:
    input: str
    model: str
    temperature: float
    status: str
    report: str | None = None
    typology: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class RunManifest:
    config: dict
    rubric_hash: str
    runs: list[RunRecord] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    cache: dict | None = None
    wall_time_s: float | None = None

    @property
    def failures(self) -> int:
        return sum(r.status != "ok" for r in self.runs)

    @property
    def report_files(self) -> list[str]:
        return [r.report for r in self.runs if r.report]

    def to_dict(self, canonical: bool = False) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "rubric_hash": self.rubric_hash,
            "runs": [r.to_dict() for r in self.runs],
            "artifacts": sorted(self.artifacts),
            "failures": self.failures,
            "cache": self.cache,
        }
        if not canonical:
            out["wall_time_s"] = self.wall_time_s
        return out


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-") or "model"


def resolve_input(spec: str) -> tuple[str, Dialogue]:
    if spec.startswith(FIXTURE_PREFIX):
        name = spec[len(FIXTURE_PREFIX):]
        return name, load_fixture(name)
    path = Path(spec)
    return path.stem, load_dialogue(path)


def _config_summary(cfg: RunConfig) -> dict:
    s = cfg.sampler
    return {
        "inputs": list(cfg.inputs),
        "provider": s.provider,
        "model": s.model_name,
        "temperature": s.temperature,
        "trials": s.trials,
        "min_effective_trials": s.min_effective_trials,
        "max_retries_per_trial": s.max_retries_per_trial,
        "seed": s.seed,
        "lag_range": [cfg.lag_min, cfg.lag_max],
        "min_overlap": cfg.min_overlap,
        "slope_band": cfg.slope_band,
        "centering": cfg.centering,
        "convention": cfg.convention,
        "common_length": cfg.common_length,
        "sweep_temperatures": list(cfg.sweep_temperatures) if cfg.sweep_temperatures else None,
        "compare_models": list(cfg.compare_models) if cfg.compare_models else None,
        "mock_spec": cfg.mock_spec if isinstance(cfg.mock_spec, (str, type(None))) else "inline",
        "rubric": str(cfg.rubric_path) if cfg.rubric_path else "packaged",
    }


def _mock_for(cfg: RunConfig, temperature: float) -> MockSpec | None:
    if cfg.mock_spec == SWEEP_TABLE_NAME:
        return sweep_mock(temperature)
    if isinstance(cfg.mock_spec, str):
        return MockSpec.load(cfg.mock_spec)
    return cfg.mock_spec


def run(cfg: RunConfig) -> RunManifest:
    """Run every dialogue x model x temperature combination and write artifacts.

    A failing combination is recorded in the manifest and the batch carries
    on. ``manifest.json`` is written to ``cfg.out_dir`` last.
    """
    started = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rubric = load_rubric(cfg.rubric_path)
    cache = ResponseCache(cfg.cache_dir) if cfg.cache_dir else None
    models = list(cfg.compare_models or [cfg.sampler.model_name])
    temps = list(cfg.sweep_temperatures or [cfg.sampler.temperature])
    manifest = RunManifest(_config_summary(cfg), digest(rubric if rubric.endswith("\n") else rubric + "\n"))

    def emit(path: Path, text: str) -> None:
        atomic_write(path, text)
        manifest.artifacts.append(path.relative_to(out).as_posix())

    for spec in cfg.inputs:
        try:
            stem, dialogue = resolve_input(spec)
            dialogue = strip_sentinels(dialogue)
            prompt = build_prompt(dialogue, rubric)
        except (McAffectError, ValueError, OSError, KeyError) as exc:
            log.error("%s: %s", spec, exc)
            for model in models:
                for tau in temps:
                    manifest.runs.append(RunRecord(spec, model, tau, "error", error=f"{type(exc).__name__}: {exc}"))
            continue
        for model in models:
            reports = []
            for tau in temps:
                sampler = replace(cfg.sampler, model_name=model, temperature=tau)
                record = RunRecord(spec, model, tau, "ok")
                manifest.runs.append(record)
                run_dir = out / stem / _slug(model) / f"tau-{tau:.2f}"
                try:
                    mock = _mock_for(cfg, tau) if sampler.provider == "mock" else None
                    provider = cfg.provider or make_provider(sampler, prompt, mock)
                    batch = run_trials(prompt, sampler, mock, cache=cache, provider=provider)
                    trajs = estimate(batch, dialogue)
                    result = analyze(
                        trajs, cfg.lag_min, cfg.lag_max, cfg.min_overlap, cfg.slope_band,
                        centering=cfg.centering, convention=cfg.convention, common_length=cfg.common_length,
                    )
                    report = build_report(trajs, result, source=spec, canonical=cfg.canonical)
                    validate_report(report)
                    emit(run_dir / "report.json", dumps_report(report))
                    emit(run_dir / "trajectories.csv", trajectories_csv(trajs))
                    emit(run_dir / "correlogram.csv", correlogram_csv(result.correlogram))
                    if cfg.emit_plots:
                        emit(run_dir / "trajectories.svg", trajectory_svg(report))
                        emit(run_dir / "correlogram.svg", correlogram_svg(report))
                    for idx in cfg.kde_utterances:
                        prof = kde_profile(batch, idx, KDE_GRID)
                        emit(run_dir / f"kde-{idx}.json", json.dumps({
                            "utterance_index": idx,
                            "point_mass": prof.point_mass,
                            "bandwidth": prof.bandwidth,
                            "grid": prof.grid.tolist(),
                            "density": None if prof.density is None else prof.density.tolist(),
                        }) + "\n")
                        if cfg.emit_plots:
                            emit(run_dir / f"kde-{idx}.svg", kde_svg(prof))
                    record.report = (run_dir / "report.json").relative_to(out).as_posix()
                    record.typology = result.typology.value
                    reports.append(report)
                except (McAffectError, ValueError, KeyError) as exc:
                    log.error("%s [%s, tau=%s]: %s", spec, model, tau, exc)
                    record.status = "error"
                    record.error = f"{type(exc).__name__}: {exc}"
            if len(reports) >= 2 and len(temps) >= 2:
                summary = sweep_summary(reports)
                base = out / stem / _slug(model)
                emit(base / "sweep_summary.csv", summary.to_csv())
                emit(base / "sweep_summary.json", json.dumps(summary.to_dict(), indent=2) + "\n")

    manifest.cache = cache.stats.to_dict() if cache else None
    manifest.wall_time_s = round(time.perf_counter() - started, 3)
    manifest.artifacts.append("manifest.json")
    atomic_write(out / "manifest.json", json.dumps(manifest.to_dict(cfg.canonical), indent=2, sort_keys=True) + "\n")
    return manifest
