"""Command line entry point: ``ldp-poison {freq,hh,theory,ingest}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .data import export_dataset, ingest_csv
from .errors import LdpError, NotApplicableError
from .harness import (ExperimentConfig, emit_results, run_frequency_experiment,
                      run_hh_experiment, theory_table)

OUT_DIR_ENV = "LDP_POISON_OUT"

# ExperimentConfig field for each CLI flag that differs in name
_FLAG_FIELDS = {"ft": "f_T", "f_t": "f_T"}


def read_config_file(path) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key = key.strip().lstrip("-").replace("-", "_")
        out[_FLAG_FIELDS.get(key, key)] = value.strip()
    return out


def parse_sweep(text: str):
    name, sep, values = text.partition("=")
    if not sep or not values.strip():
        raise argparse.ArgumentTypeError("sweep must look like <param>=<v1,v2,...>")
    name = _FLAG_FIELDS.get(name.strip(), name.strip())
    return name, tuple(v.strip() for v in values.split(",") if v.strip())


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; command line flags take precedence")
    p.add_argument("--dataset", help="zipf | ipums | fire | csv:path:column | file:path")
    p.add_argument("--n", type=int, help="user count for synthetic sources (default 100000)")
    p.add_argument("--d", type=int, help="domain size for the zipf source")
    p.add_argument("--zipf-exponent", type=float)
    p.add_argument("--protocol", choices=["krr", "oue", "olh"])
    p.add_argument("--attack", choices=["rpa", "ria", "mga"])
    p.add_argument("--defense", choices=["none", "normalize", "detect", "both"])
    p.add_argument("--beta", type=float)
    p.add_argument("--r", type=int)
    p.add_argument("--ft", type=float, dest="f_T")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--g", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--hash-candidates", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes for sweep points")
    p.add_argument("--sweep", type=parse_sweep, help="<param>=<v1,v2,...>")
    p.add_argument("--paper-scale", action="store_true", help="use the source's full user count")
    p.add_argument("--out", help="output file (default: $%s/<command>.<format>)" % OUT_DIR_ENV)
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldp-poison", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("freq", "attack gains on frequency estimation"),
                        ("hh", "attack success on PEM heavy hitters"),
                        ("theory", "closed-form gains only")]:
        _experiment_args(sub.add_parser(name, help=help_))
    ing = sub.add_parser("ingest", help="convert one CSV column into the dataset export format")
    ing.add_argument("path")
    ing.add_argument("--column", required=True)
    ing.add_argument("--filter", help="keep rows where column=value")
    ing.add_argument("--max-rows", type=int)
    ing.add_argument("--out", required=True)
    return parser


_INT_FIELDS = {"n", "d", "r", "k", "g", "trials", "seed", "jobs", "hash_candidates"}
_FLOAT_FIELDS = {"beta", "f_T", "epsilon", "eta", "zipf_exponent", "min_support_fraction"}


def config_from_args(args) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            if key == "sweep":
                values[key] = parse_sweep(raw)
            elif key in _INT_FIELDS:
                values[key] = int(raw)
            elif key in _FLOAT_FIELDS:
                values[key] = float(raw)
            else:
                values[key] = raw
    for key in ("dataset", "n", "d", "zipf_exponent", "protocol", "attack", "defense", "beta", "r",
                "f_T", "epsilon", "k", "g", "eta", "hash_candidates", "trials", "seed", "jobs", "sweep"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if args.paper_scale:
        values["n"] = None
    return ExperimentConfig(**values)


def _out_path(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / f"{args.command}.{args.format}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "ingest":
            ds = ingest_csv(args.path, args.column, args.max_rows, args.filter)
            export_dataset(ds, args.out)
            print(f"d={ds.d} n={ds.n} skipped={ds.skipped}")
            return 0
        config = config_from_args(args)
        runner = {"freq": run_frequency_experiment, "hh": run_hh_experiment, "theory": theory_table}[args.command]
        records = runner(config)
        path = emit_results(records, _out_path(args), args.format)
        print(path)
        return 0
    except NotApplicableError as exc:
        print(f"not applicable: {exc}", file=sys.stderr)
        return 3
    except (LdpError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
