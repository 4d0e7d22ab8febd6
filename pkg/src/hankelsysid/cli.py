"""Command-line entry point.

Exit codes: 0 on success, 1 on configuration errors, 2 on runtime or
numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from .config import make_config, load_config_file
from .errors import ConfigError, HankelSysIdError
from .experiments import RUNNERS, generate_dataset
from .report import emit_report

SUBCOMMANDS = {
    "slow-decay": "slow_decay",
    "scaling": "scaling",
    "phase": "phase_transition",
    "spectrum": "spectrum",
    "gauss-norm": "gaussian_norm",
    "fit": "dataset_fit",
    "generate": "generate",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _parse_set(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hankelsysid", description=__doc__.splitlines()[0] if __doc__ else None)
    ap.add_argument("--config", help="JSON config file; flags override its values")
    ap.add_argument("--seed", type=int, help="base seed")
    ap.add_argument("--out", help="output path (stdout when omitted)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--trials", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--lambda-c", dest="lambda_C", type=float)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (value parsed as JSON)")

    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--n", type=int)
        p.add_argument("--T", type=int)
        p.add_argument("--T-val", dest="T_val", type=int)
        p.add_argument("--sigma-z", dest="sigma_z", type=float)
        p.add_argument("--snr", type=float)
        p.add_argument("--R", type=int)
        p.add_argument("--pole", type=float)
        if name in ("scaling", "phase"):
            p.add_argument("--T-list", dest="T_list", type=_int_list)
        if name in ("phase", "gauss-norm"):
            p.add_argument("--n-list", dest="n_list", type=_int_list)
        if name == "gauss-norm":
            p.add_argument("--p-list", dest="p_list", type=_int_list)
        if name == "fit":
            p.add_argument("dataset", nargs="?")
            p.add_argument("--inputs", type=_int_list)
            p.add_argument("--outputs", type=_int_list)
            p.add_argument("--skip-rows", dest="skip_rows", type=int)
            p.add_argument("--delay", type=int)
    st = sub.add_parser("selftest")
    st.add_argument("--quick", action="store_true")
    return ap


_RESERVED = {"command", "config", "out", "format", "no_timestamp", "set", "quick"}


def _overrides(args: argparse.Namespace) -> dict:
    over = {}
    if args.config:
        over.update(load_config_file(args.config))
    for k, v in vars(args).items():
        if k in _RESERVED or v is None:
            continue
        over[k] = v
    over.update(_parse_set(getattr(args, "set", None)))
    return over


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("a subcommand is required")
        if args.command == "selftest":
            from .selftest import run_selftest

            ok, lines = run_selftest()
            for line in lines:
                print(line)
            return 0 if ok else 2
        kind = SUBCOMMANDS[args.command]
        over = _overrides(args)
        over.pop("kind", None)
        cfg = make_config(kind, over)
        if kind == "generate":
            if not args.out:
                raise ConfigError("generate needs --out for the data file")
            report = generate_dataset(cfg, args.out)
            print(json.dumps(report.summary))
            return 0
        with np.errstate(all="ignore"):
            report = RUNNERS[kind](cfg)
        text = emit_report(report, args.out, args.format, timestamp=not args.no_timestamp)
        if not args.out or args.out == "-":
            sys.stdout.write(text)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (HankelSysIdError, np.linalg.LinAlgError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
