"""Command-line interface: ``stormgen fit | generate | evaluate | report``.

Exit codes: 0 success, 1 domain error, 2 usage or I/O error. Every failure
prints one line to stderr of the form ``stormgen: error[<component>]: ...``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .bundle import BundleError
from .config import ConfigError, PipelineConfig, load_config
from .ingest import IngestError
from .pipeline import PipelineError, cmd_evaluate, cmd_fit, cmd_generate, cmd_report
from .store import StoreError

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _probability(text: str):
    if text.startswith("from:"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid probability {text!r}") from None


def _month(text: str):
    if text in ("annual", "year"):
        return 0
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--input", help="historical daily CSV")
    common.add_argument("--bundle", help="model bundle path (default: <out>/bundle.json)")

    parser = _Parser(prog="stormgen", description="Extreme-conditioned stochastic precipitation scenarios.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", parents=[common], help="fit all model components and write a bundle")
    fit.add_argument("--percentile", type=float, help="extreme percentile (default 0.95)")
    fit.add_argument("--wet-threshold", type=float, help="wet-day threshold in mm (default 0.1)")

    gen = sub.add_parser("generate", parents=[common], help="generate a conditioned scenario ensemble")
    gen.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    gen.add_argument("--n", type=int, help="number of scenarios N")
    gen.add_argument("--p", type=_probability, help="extreme fraction P, or from:empirical|from:gpd|from:gev")
    gen.add_argument("--month", type=_month, help="target month 1-12, or 'annual' for a whole year")
    gen.add_argument("--year", type=int, help="target year (default: a non-leap reference year)")
    gen.add_argument("--calibration", help="none | climatology | ar_model | tercile:<below|near|above>")
    gen.add_argument("--workers", type=int, help="worker processes")
    gen.add_argument("--format", choices=("csv", "ndjson"), help="scenario output format")
    gen.add_argument("--force", action="store_true", help="ignore a bundle fingerprint mismatch")

    ev = sub.add_parser("evaluate", parents=[common], help="compare scenarios with the historical record")
    ev.add_argument("--scenarios", help="scenario directory or NDJSON file")
    ev.add_argument("--heldout", help="held-out daily CSV for CRPS and Brier scores")
    ev.add_argument("--wet-only", action="store_true", default=None, help="compare wet days only")

    sub.add_parser("report", parents=[common], help="print a summary of the evaluation outputs")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    get = lambda name: getattr(args, name, None)  # noqa: E731
    cfg = cfg.override("input", path=get("input"))
    cfg = cfg.override("output", dir=get("out"), bundle=get("bundle"), format=get("format"))
    cfg = cfg.override("extremes", percentile=get("percentile"), wet_threshold=get("wet_threshold"))
    cfg = cfg.override(
        "ensemble",
        n=get("n"),
        p=get("p"),
        year=get("year"),
        master_seed=get("seed"),
        calibration=get("calibration"),
        workers=get("workers"),
    )
    if get("month") is not None:
        # month 0 selects a whole year, which a None override cannot express
        cfg = replace(cfg, ensemble=replace(cfg.ensemble, month=get("month") or None))
    cfg = cfg.override("evaluate", scenarios=get("scenarios"), heldout=get("heldout"), wet_only=get("wet_only"))
    return cfg.validate()


def _configure_logging() -> None:
    level = os.environ.get("STORMGEN_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise UsageError(f"STORMGEN_LOG: unknown log level {level!r}")
    logging.basicConfig(level=level, format="stormgen: %(levelname)s: %(message)s", stream=sys.stderr, force=True)


def _fail(code: int, component: str, message: str) -> int:
    one_line = " ".join(str(message).split())
    print(f"stormgen: error[{component}]: {one_line}", file=sys.stderr)
    return code


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if args.command == "fit":
            print(cmd_fit(cfg))
        elif args.command == "generate":
            print(cmd_generate(cfg, force=args.force))
        elif args.command == "evaluate":
            print(cmd_evaluate(cfg))
        else:
            _, text = cmd_report(cfg)
            sys.stdout.write(text)
        return EXIT_OK
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "config", exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, "io", f"file not found: {exc.filename or exc}")
    except (BundleError, StoreError) as exc:
        return _fail(EXIT_USAGE, "io", exc)
    except OSError as exc:
        return _fail(EXIT_USAGE, "io", f"{exc.filename or ''}: {exc.strerror or exc}")
    except PipelineError as exc:
        return _fail(EXIT_DOMAIN, exc.component, exc)
    except IngestError as exc:
        return _fail(EXIT_DOMAIN, "ingest", exc)
    except (ValueError, ArithmeticError) as exc:
        return _fail(EXIT_DOMAIN, "domain", exc)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
