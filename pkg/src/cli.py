"""
Command-line surface: simulate, study, analyze and screen.

Usage:
    python run_gmethods.py simulate --m 30 --seed 7 --output outputs/sim.csv
    python run_gmethods.py study --m 10,30 --reps 50 --methods gformula,msm,snm,gee
    python run_gmethods.py analyze --input river.csv --nutrient no3 --quantile 0.5
    python run_gmethods.py screen --input river.csv
"""

import argparse
import json
import logging
import os
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from src.config import AnalysisConfig, StudyConfig
from src.data.generator import DgpConfig, generate_panel_data
from src.data.panel import load_csv
from src.data.screening import spearman_screen
from src.engine.analysis import analyze_csv
from src.engine.study import run_study
from src.gmethods.registry import validate_methods

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_DIR = Path("outputs")
LOG_FILE = "gmethods_execution.log"

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def setup_logging(output_dir: Path) -> None:
    """Configure logging to a file in the output directory and the console."""
    output_dir.mkdir(parents=True, exist_ok=True)
    level = os.environ.get("GMETHODS_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(output_dir / LOG_FILE, mode='w', encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True,
    )


def load_env() -> None:
    try:
        from dotenv import load_dotenv

        load_dotenv()
    except ImportError:
        print("[WARN] python-dotenv not installed, using system environment variables only")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _name_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _b_value(text: str) -> Any:
    if text in ("all", "uncorrected"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"b must be 0.1, 0.3, 0.75, 'uncorrected' or 'all', got {text!r}") from None


def _overrides(args: argparse.Namespace, mapping: Dict[str, str]) -> Dict[str, Any]:
    """Config fields set explicitly on the command line."""
    out = {}
    for flag, name in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            out[name] = value
    return out


def _write_metadata(path: Path, metadata: Dict[str, Any]) -> Path:
    from src import __version__

    meta_path = path.with_name(path.stem + ".meta.json")
    meta_path.write_text(json.dumps({"version": __version__, **metadata}, indent=2, default=str), encoding="utf-8")
    return meta_path


def _output(args: argparse.Namespace, default: str) -> Path:
    return Path(args.output) if args.output else DEFAULT_OUTPUT_DIR / default


# --- commands --------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    dgp = DgpConfig.from_yaml(args.config) if args.config else DgpConfig()
    m = args.m[0] if args.m else 30
    if len(args.m or []) > 1:
        raise ValueError(f"simulate takes a single m, got {args.m}")
    generate_panel_data(m, args.seed if args.seed is not None else 0, _output(args, "simulated.csv"), dgp)
    return EXIT_OK


def cmd_study(args: argparse.Namespace) -> int:
    study = StudyConfig.from_yaml(args.config) if args.config else StudyConfig()
    dgp = DgpConfig.from_yaml(args.dgp) if args.dgp else DgpConfig()
    if args.methods is not None:
        args.methods = validate_methods(args.methods)
    study = replace(study, **_overrides(args, {
        "m": "m_values", "reps": "replicates", "seed": "base_seed", "methods": "methods",
        "level": "level", "b": "b", "dist": "dist", "workers": "workers",
    }))

    print(f"[INFO] Study: m={study.m_values}, {study.replicates} replicates, methods {study.methods}")
    summary = run_study(dgp, study, verbose=True)
    print(summary)
    table_path, meta_path = summary.to_csv(_output(args, "study.csv"), replicates=args.replicates)
    if summary.n_failures:
        print(f"[WARN] {summary.n_failures} fits failed; counts are in the summary")
    print(f"[INFO] Summary: {table_path}")
    print(f"[INFO] Metadata: {meta_path}")
    return EXIT_OK


def _analysis_config(args: argparse.Namespace) -> AnalysisConfig:
    config = AnalysisConfig.from_yaml(args.config) if args.config else AnalysisConfig()
    if args.methods is not None:
        args.methods = validate_methods(args.methods)
    overrides = _overrides(args, {
        "nutrient": "nutrient", "quantile": "quantile", "space_covariate": "space_covariate",
        "level": "level", "b": "b", "dist": "dist", "methods": "methods", "target_km": "target_km",
    })
    if args.interact_temp_flow:
        overrides["interaction"] = True
    if args.interpolate:
        overrides["interpolate"] = True
    return replace(config, **overrides)


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _analysis_config(args)
    print(f"[INFO] Analysing {config.nutrient} in {args.input} (quantile {config.quantile}, "
          f"space-varying covariate {config.resolved_space_covariate})")
    result = analyze_csv(args.input, config)
    print(result)
    paths = result.to_csv(_output(args, f"analysis_{config.nutrient}.csv"))
    failed = sum(r.failed for r in result.reports)
    if failed:
        print(f"[WARN] {failed} estimates failed")
    for kind, path in paths.items():
        print(f"[INFO] {kind}: {path}")
    return EXIT_OK


def cmd_screen(args: argparse.Namespace) -> int:
    config = _analysis_config(args)
    data = load_csv(args.input, config.schema())
    target = data.n_s - 1 if config.target_km is None else data.location_index(config.target_km)
    table = spearman_screen(data, target, config.nutrients)
    output = _output(args, "screen.csv")
    output.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(output, index=False)
    meta_path = _write_metadata(output, {
        "command": "screen",
        "input": str(args.input),
        "target_km": data.locations[target],
        "config": asdict(config),
    })
    print(f"[INFO] {len(table)} correlations against {data.locations[target]:g} km -> {output}")
    print(f"[INFO] Metadata: {meta_path}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Space-time causal g-methods for river panels.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument('--config', '-c', type=Path, help="YAML config file supplying defaults")
        p.add_argument('--output', '-o', type=Path, help="Output CSV path")

    def inference(p: argparse.ArgumentParser) -> None:
        p.add_argument('--methods', type=_name_list, help="Comma-separated: gformula,msm,snm,gee")
        p.add_argument('--level', type=float, help="Confidence level (default 0.90)")
        p.add_argument('--b', type=_b_value, help="Bias correction: 0.1, 0.3, 0.75, uncorrected or all")
        p.add_argument('--dist', choices=["normal", "t", "all"], help="Reference distribution")

    def analysis(p: argparse.ArgumentParser) -> None:
        p.add_argument('--input', '-i', type=Path, required=True, help="Long-format panel CSV")
        p.add_argument('--nutrient', help="Exposure nutrient column")
        p.add_argument('--quantile', type=float, choices=[0.25, 0.5, 0.75], help="Cutpoint quantile")
        p.add_argument('--space-covariate', dest="space_covariate", help="Space-varying covariate column")
        p.add_argument('--target-km', dest="target_km", type=float, help="Outcome site (default most downstream)")
        p.add_argument('--interact-temp-flow', dest="interact_temp_flow", action="store_true",
                       help="Add the temperature x flow interaction")
        p.add_argument('--interpolate', action="store_true", help="Fill failed estimates from neighbouring pairs")

    p = sub.add_parser("simulate", help="Simulate a panel from the structural equations")
    common(p)
    p.add_argument('--m', type=_int_list, help="Number of years (default 30)")
    p.add_argument('--seed', type=int, help="Seed (default 0)")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("study", help="Bias and coverage study over replicated simulations")
    common(p)
    inference(p)
    p.add_argument('--dgp', type=Path, help="YAML file with structural coefficients")
    p.add_argument('--m', type=_int_list, help="Comma-separated sample sizes")
    p.add_argument('--reps', type=int, help="Replicates per sample size")
    p.add_argument('--seed', type=int, help="Base seed")
    p.add_argument('--workers', type=int, help="Worker processes")
    p.add_argument('--replicates', action="store_true", help="Also write replicate-level rows")
    p.set_defaults(handler=cmd_study)

    p = sub.add_parser("analyze", help="Estimate effects for every adjacent upstream pair")
    common(p)
    inference(p)
    analysis(p)
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("screen", help="Spearman screening of upstream nutrients")
    common(p)
    analysis(p)
    p.set_defaults(handler=cmd_screen, methods=None, level=None, b=None, dist=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    load_env()
    log_dir = Path(args.output).parent if args.output else DEFAULT_OUTPUT_DIR
    try:
        setup_logging(log_dir)
        return args.handler(args)
    except (ValueError, yaml.YAMLError) as exc:
        logger.error("%s", exc)
        print(f"[ERROR] {exc}")
        return EXIT_INVALID
    except OSError as exc:
        logger.error("%s", exc)
        print(f"[ERROR] {exc}")
        return EXIT_IO
