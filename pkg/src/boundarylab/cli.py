"""Command-line entry point.

    boundarylab run <config.json> [--output-root DIR]
    boundarylab validate <config.json>
    boundarylab list-models

Exit codes: 0 success, 1 configuration error, 2 runtime error.  Errors are
also emitted as one machine-readable JSON object on stderr.  The output
root defaults to the current directory and can be overridden by the
BOUNDARYLAB_OUTPUT_ROOT environment variable or the --output-root flag.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import parse_config
from .errors import BoundaryLabError, ConfigError


def _error_json(exc: Exception) -> str:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    if isinstance(exc, ConfigError):
        payload["error"]["field"] = exc.field
    return json.dumps(payload, sort_keys=True)


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    from .runner import run_experiment

    manifest, out_dir = run_experiment(cfg, args.output_root)
    print(f"wrote {len(manifest.artifacts)} artifacts to {out_dir} "
          f"(config {manifest.config_hash[:12]})")
    return 0


def _cmd_validate(args) -> int:
    cfg = parse_config(args.config)
    print(f"ok: {cfg.experiment} experiment, config hash {cfg.config_hash[:12]}")
    return 0


def _cmd_list_models(args) -> int:
    from .models import catalog

    print(f"{'model':<8} {'alpha_bar':>10} {'beta_bar':>10} verdict")
    for name, rep in catalog():
        print(f"{name:<8} {rep.alpha_bar:>10.6f} {rep.beta_bar:>10.6f} "
              f"{rep.verdict.value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boundarylab",
                                     description="boundary-degeneration laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--output-root", default=None,
                       help="directory the run folder is created under")
    p_run.set_defaults(fn=_cmd_run)
    p_val = sub.add_parser("validate", help="parse and validate a config")
    p_val.add_argument("config")
    p_val.set_defaults(fn=_cmd_validate)
    p_list = sub.add_parser("list-models", help="classify the built-in model zoo")
    p_list.set_defaults(fn=_cmd_list_models)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(_error_json(exc), file=sys.stderr)
        return 1
    except (BoundaryLabError, OSError, ValueError) as exc:
        print(_error_json(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
