from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

from .config import load_config
from .harness import (
    EXPERIMENT_KINDS,
    ConfigError,
    ExperimentSpec,
    RunArtifact,
    RunConfig,
    acceptance_gaps,
    check_run_config,
    parse_run_config,
    report_from_ledger,
    run,
)
from .validation import RUN_CONFIG_SCHEMA, SchemaValidationError, load_schema, validate_json

DEFAULT_ACCEPTANCE_CONFIG = "configs/acceptance.json"
PROFILE_KINDS = ("couette", "bump", "remark")
EPS_RANGE = re.compile(r"^2\^-(\d+)\.\.2\^-(\d+)$")

EXPERIMENT_HELP = {
    "check-profile": "Check the profile hypotheses and the sufficient spectral condition.",
    "greens-decay": "Fit the Fourier decay of the localized Green's kernel and check the Green's identity.",
    "gevrey-props": "Randomized weight inequalities and cutoff transform decay.",
    "evolve": "Time-step the linearized modes and fit Orr, scattering and Gevrey-growth rates.",
    "spectral": "Extrapolate limiting-absorption differences at chosen critical heights.",
    "compare": "Compare the spectral stream-function representation with the time-stepper.",
    "scan": "Scan sigma_min(I + T) for embedded eigenvalues and fit the T-norm scaling.",
    "theta": "Weighted ratios of the Theta transform, including an over-weighted control.",
    "cutoff": "Tabulate the Gevrey cutoffs used by the coordinate map.",
}


def _mode_list(text: str) -> list[int]:
    """``1..4`` or ``1,2,4``."""
    try:
        if ".." in text:
            lo, hi = (int(part) for part in text.split("..", 1))
            modes = list(range(lo, hi + 1))
        else:
            modes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid mode list {text!r}") from exc
    if not modes or 0 in modes:
        raise argparse.ArgumentTypeError(f"mode list {text!r} must be nonempty and exclude 0")
    return modes


def _time_list(text: str) -> list[float]:
    try:
        times = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid time list {text!r}") from exc
    if not times or min(times) < 0:
        raise argparse.ArgumentTypeError(f"time list {text!r} must be nonempty and nonnegative")
    return times


def _eps_range(text: str) -> list[int]:
    """``2^-4..2^-10`` -> ``[4, 10]``."""
    match = EPS_RANGE.match(text.strip())
    if not match:
        raise argparse.ArgumentTypeError(f"eps range must look like 2^-4..2^-10, got {text!r}")
    first, last = int(match.group(1)), int(match.group(2))
    if not 1 <= first < last:
        raise argparse.ArgumentTypeError(f"eps range must shrink from 2^-{first}, got {text!r}")
    return [first, last]


def _dt(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--dt must be 'auto' or a number, got {text!r}") from exc
    if not value > 0:
        raise argparse.ArgumentTypeError(f"--dt must be positive, got {text!r}")
    return value


def _y0_grid(text: str) -> int | str:
    if text == "auto":
        return text
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--y0-grid must be 'auto' or an integer, got {text!r}") from exc
    if value < 16:
        raise argparse.ArgumentTypeError(f"--y0-grid needs at least 16 intervals, got {value}")
    return value


def _add_common(parser: argparse.ArgumentParser, *, config_required: bool = False) -> None:
    parser.add_argument("--config", required=config_required, default=None, help="Path to a JSON run config.")
    parser.add_argument("--seed", type=int, default=None, help="Seed for every random draw (overrides config).")
    parser.add_argument("--out", default=None, help="Output directory (default: $SHEAR_DAMPING_OUTPUT_DIR or out).")
    parser.add_argument("--jobs", type=int, default=None, help="Worker threads (default: $SHEAR_DAMPING_JOBS or 1).")
    parser.add_argument("--cache", default=None, help="SQLite slice cache path for spectral assembly.")


def _add_profile(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--profile",
        default=None,
        help=f"Profile kind ({', '.join(PROFILE_KINDS)}) or a JSON file with a profile or run config.",
    )


def _add_experiment_options(kind: str, parser: argparse.ArgumentParser) -> None:
    if kind == "evolve":
        _add_profile(parser)
        parser.add_argument("--k", type=_mode_list, default=None, help="Modes, e.g. 1..4 or 1,2.")
        parser.add_argument("--T", type=float, default=None, help="Final time.")
        parser.add_argument("--dt", type=_dt, default=None, help="Time step or 'auto'.")
        parser.add_argument("--n", type=int, default=None, help="Wall-normal grid intervals.")
    elif kind == "spectral":
        _add_profile(parser)
        parser.add_argument("--k", type=_mode_list, default=None, help="Modes, e.g. 1 or 1..2.")
        parser.add_argument("--t", type=_time_list, default=None, help="Assembly times, e.g. 0,10,20.")
        parser.add_argument("--y0-grid", type=_y0_grid, default=None, help="Critical-height grid or 'auto'.")
        parser.add_argument("--eps", type=_eps_range, default=None, help="Absorption schedule, e.g. 2^-4..2^-10.")
    elif kind == "cutoff":
        parser.add_argument("--a", type=float, action="append", default=None, help="Cutoff exponent (repeatable).")
        parser.add_argument("--n", type=int, default=None, help="Sample points on [0, 1].")
        parser.add_argument(
            "--csv",
            nargs="?",
            const="-",
            default=None,
            help="Also write the cutoff table to this path, or to stdout without one.",
        )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shear-damping",
        description="Numerical lab for linear inviscid damping around monotone shear flows in a channel.",
    )
    parser.add_argument("--env", default=None, help="Path to a .env file read before the environment.")
    sub = parser.add_subparsers(dest="command", required=True)

    for kind in EXPERIMENT_KINDS:
        experiment = sub.add_parser(kind, help=EXPERIMENT_HELP[kind])
        _add_common(experiment)
        _add_experiment_options(kind, experiment)

    _add_common(sub.add_parser("run", help="Run every experiment listed in the config."), config_required=True)

    accept = sub.add_parser("accept", help="Run the full acceptance suite; nonzero exit on any failure.")
    _add_common(accept)

    report = sub.add_parser("report", help="Rebuild summary.csv in an output directory from its ledger.")
    report.add_argument("--out", required=True, help="Output directory of an earlier run.")
    return parser


def _resolve(args: argparse.Namespace, config_path: str | None) -> tuple[RunConfig, Path]:
    base = load_config(args.env)
    cfg = parse_run_config(Path(config_path)) if config_path else RunConfig()
    cfg = replace(
        cfg,
        seed=args.seed if args.seed is not None else (cfg.seed if config_path else base.seed),
        jobs=max(1, args.jobs if args.jobs is not None else (cfg.jobs if config_path else base.jobs)),
        cache=args.cache or cfg.cache or (str(base.cache_path) if base.cache_path else None),
    )
    out_dir = Path(args.out) if args.out else (cfg.output_dir or base.output_dir)
    return cfg, out_dir


def _load_profile(text: str) -> dict[str, Any]:
    if text in PROFILE_KINDS:
        return {"kind": text}
    path = Path(text)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in profile file {path}: {exc}") from exc
    if isinstance(raw, dict) and isinstance(raw.get("profile"), dict):
        raw = raw["profile"]
    if not isinstance(raw, dict):
        raise ConfigError(f"profile file {path} must hold a JSON object")
    validate_json({"profile": raw}, load_schema(RUN_CONFIG_SCHEMA))
    return dict(raw)


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Experiment params set on the command line."""
    params: dict[str, Any] = {}
    if getattr(args, "k", None) is not None:
        params["ks"] = args.k
    if getattr(args, "T", None) is not None:
        params["T"] = args.T
    if getattr(args, "dt", None) is not None:
        params["dt"] = None if args.dt == "auto" else args.dt
    if getattr(args, "t", None) is not None:
        params["times"] = args.t
    if getattr(args, "y0_grid", None) is not None:
        params["n"] = args.y0_grid
    if getattr(args, "eps", None) is not None:
        params["eps"] = args.eps
    if getattr(args, "a", None) is not None:
        params["a"] = args.a
    if args.command == "cutoff" and args.n is not None:
        params["points"] = args.n
    elif getattr(args, "n", None) is not None:
        params["n"] = args.n
    return params


def _select(
    cfg: RunConfig, kind: str, params: dict[str, Any] | None = None, profile: dict[str, Any] | None = None
) -> RunConfig:
    chosen = tuple(spec for spec in cfg.experiments if spec.kind == kind)
    if not chosen:
        chosen = (ExperimentSpec(id=kind, kind=kind),)
    chosen = tuple(
        replace(spec, params={**spec.params, **(params or {})}, profile=profile or spec.profile) for spec in chosen
    )
    return replace(cfg, experiments=chosen)


def _emit_csv(artifact: RunArtifact, target: str) -> None:
    for result in artifact.results:
        table = artifact.out_dir / result.id / "cutoff.csv"
        if not table.exists():
            continue
        text = table.read_text(encoding="utf-8")
        if target == "-":
            sys.stdout.write(text)
        else:
            path = Path(target)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            print(f"[run] cutoff csv={path}")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "report":
        out_dir = Path(args.out)
        if not (out_dir / "ledger.jsonl").exists():
            parser.error(f"no ledger.jsonl under {out_dir}")
        report_from_ledger(out_dir)
        return 0

    if args.jobs is not None and args.jobs < 1:
        parser.error("--jobs must be at least 1")
    if args.command == "cutoff" and args.n is not None and args.n < 2:
        parser.error("--n must be at least 2")
    config_path = args.config
    if args.command == "accept" and config_path is None:
        config_path = DEFAULT_ACCEPTANCE_CONFIG
    try:
        cfg, out_dir = _resolve(args, config_path)
        if args.command in EXPERIMENT_KINDS:
            profile = _load_profile(args.profile) if getattr(args, "profile", None) else None
            cfg = _select(cfg, args.command, _overrides(args), profile)
            check_run_config(cfg)
        if args.command == "accept":
            missing = acceptance_gaps(cfg)
            if missing:
                raise ConfigError(f"acceptance config leaves criteria {missing} without an experiment")
            cfg = replace(cfg, experiments=tuple(s for s in cfg.experiments if s.criterion is not None))
    except (ConfigError, SchemaValidationError, RuntimeError, OSError) as exc:
        print(f"[run] config error: {exc}", file=sys.stderr)
        return 2

    artifact = run(cfg, out_dir)
    if getattr(args, "csv", None) is not None:
        _emit_csv(artifact, args.csv)
    if args.command == "accept":
        for result in sorted(artifact.results, key=lambda r: r.criterion or 0):
            print(f"[run] criterion={result.criterion} experiment={result.id} status={result.status}")
    return artifact.exit_code


if __name__ == "__main__":
    sys.exit(main())
