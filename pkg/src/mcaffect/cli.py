"""Command-line entry point: ``mcaffect analyze | summarize | plot | fixture``.

Exit codes: 0 success, 1 partial failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .fixtures import FIXTURE_NAMES, SWEEP_TABLE_NAME, fixture_text
from .gateway import DEFAULT_BASE_URL, SamplerConfig
from .pipeline import RunConfig, run
from .plots import correlogram_svg, trajectory_svg
from .report import atomic_write, load_report, sweep_summary
from .errors import McAffectError


def _lag_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <min>:<max>, got {text!r}") from None
    if lo > 0 or hi < 0:
        raise argparse.ArgumentTypeError("lag range must contain 0")
    return lo, hi


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcaffect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mcaffect {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="score dialogues and derive trajectories, correlogram and typology")
    a.add_argument("--input", nargs="+", action="extend", default=[], metavar="PATH",
                   help=f"dialogue file (.json or plain text) or {'fixture:<name>'}")
    a.add_argument("--provider", choices=("remote", "mock"), default="mock")
    a.add_argument("--model", default=None, help="model name (default: 'mock' for the mock provider)")
    a.add_argument("--base-url", default=DEFAULT_BASE_URL)
    a.add_argument("--timeout", type=float, default=60.0, help="request timeout in seconds")
    a.add_argument("--temperature", type=float, default=0.7)
    a.add_argument("--allow-zero-temperature", action="store_true")
    a.add_argument("--trials", type=int, default=20)
    a.add_argument("--min-trials", type=int, default=10, help="minimum valid trials per run")
    a.add_argument("--retries", type=int, default=3, help="retries per failed trial")
    a.add_argument("--parallelism", type=int, default=4)
    a.add_argument("--lag-range", type=_lag_range, default=(-3, 3), metavar="MIN:MAX",
                   help="lag window, e.g. --lag-range=-3:3")
    a.add_argument("--min-overlap", type=int, default=3)
    a.add_argument("--slope-band", type=float, default=0.01)
    a.add_argument("--centering", choices=("global", "overlap"), default="global")
    a.add_argument("--lag-convention", choices=("reverse", "forward"), default="reverse")
    a.add_argument("--common-length", action="store_true", help="truncate both trajectories to the shorter length")
    a.add_argument("--cache-dir", default=None)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--mock-spec", default=None,
                   help=f"mock distribution JSON file, or '{SWEEP_TABLE_NAME}' for the bundled personification table")
    a.add_argument("--rubric", default=None, help="custom rubric text file")
    a.add_argument("--sweep", type=_float_list, default=None, metavar="T1,T2,...")
    a.add_argument("--compare-models", type=_str_list, default=None, metavar="M1,M2,...")
    a.add_argument("--kde", type=_int_list, default=[], metavar="IDX,...", help="emit score densities for these utterances")
    a.add_argument("--out", default="mcaffect-out")
    a.add_argument("--plots", action="store_true")
    a.add_argument("--canonical", action="store_true", help="omit timestamps so reruns are byte-identical")

    s = sub.add_parser("summarize", help="tabulate a temperature sweep from report.json files")
    s.add_argument("reports", nargs="+")
    s.add_argument("--out", default=None, help="CSV output path (default: stdout)")

    p = sub.add_parser("plot", help="regenerate SVG plots from a report.json")
    p.add_argument("report")
    p.add_argument("--out", default=None, help="output directory (default: next to the report)")

    f = sub.add_parser("fixture", help="print a bundled case-study dialogue as JSON")
    f.add_argument("name", choices=FIXTURE_NAMES)
    return parser


def _analyze(args, parser) -> int:
    if not args.input:
        parser.error("analyze: at least one --input is required")
    if args.provider == "mock" and args.mock_spec is None:
        parser.error("analyze: the mock provider needs --mock-spec")
    model = args.model or ("mock" if args.provider == "mock" else None)
    if model is None and not args.compare_models:
        parser.error("analyze: --model is required for the remote provider")
    try:
        sampler = SamplerConfig(
            provider=args.provider,
            model_name=model or args.compare_models[0],
            temperature=args.temperature,
            trials=args.trials,
            max_retries_per_trial=args.retries,
            min_effective_trials=min(args.min_trials, args.trials),
            parallelism=args.parallelism,
            timeout=args.timeout,
            base_url=args.base_url,
            seed=args.seed,
            allow_zero_temperature=args.allow_zero_temperature,
        )
        cfg = RunConfig(
            inputs=args.input,
            sampler=sampler,
            out_dir=args.out,
            lag_min=args.lag_range[0],
            lag_max=args.lag_range[1],
            min_overlap=args.min_overlap,
            slope_band=args.slope_band,
            centering=args.centering,
            convention=args.lag_convention,
            common_length=args.common_length,
            sweep_temperatures=args.sweep,
            compare_models=args.compare_models,
            emit_plots=args.plots,
            canonical=args.canonical,
            cache_dir=args.cache_dir,
            mock_spec=args.mock_spec,
            rubric_path=args.rubric,
            kde_utterances=args.kde,
        )
    except ValueError as exc:
        parser.error(f"analyze: {exc}")
    manifest = run(cfg)
    for r in manifest.runs:
        tag = r.typology if r.status == "ok" else f"FAILED ({r.error})"
        print(f"{r.input}  model={r.model}  tau={r.temperature:g}  {tag}")
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    return 1 if manifest.failures else 0


def _summarize(args) -> int:
    summary = sweep_summary([load_report(p) for p in args.reports])
    text = summary.to_csv()
    if args.out:
        atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _plot(args) -> int:
    report = load_report(args.report)
    out = Path(args.out) if args.out else Path(args.report).parent
    atomic_write(out / "trajectories.svg", trajectory_svg(report))
    atomic_write(out / "correlogram.svg", correlogram_svg(report))
    print(out / "trajectories.svg")
    print(out / "correlogram.svg")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "analyze":
            return _analyze(args, parser)
        if args.command == "summarize":
            return _summarize(args)
        if args.command == "plot":
            return _plot(args)
        if args.command == "fixture":
            sys.stdout.write(fixture_text(args.name))
            return 0
    except (McAffectError, OSError, json.JSONDecodeError) as exc:
        print(f"mcaffect: error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
