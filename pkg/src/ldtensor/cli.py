"""Command-line entry point: ``ldtensor {oracle|bound|estimate|verify|sweep}``."""

from __future__ import annotations

import argparse
import os
import sys

from .harness import MODES, ExperimentConfig, UsageError, run
from .model import CapacityError, ParameterError, parse_fraction


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldtensor", description=__doc__)
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", help="JSON experiment config (defaults to the built-in grid)")
    ap.add_argument("--out", help="directory for CSV output (stdout when omitted)")
    ap.add_argument("--threads", type=int, default=1)
    direct = ap.add_argument_group("direct estimate/sweep flags (override the config)")
    direct.add_argument("--n", type=int, action="append")
    direct.add_argument("--r", type=int, action="append")
    direct.add_argument("--k", type=int, action="append")
    direct.add_argument("--lambda2", help="common weight of components 2..r, e.g. 1/2")
    direct.add_argument("--samples", type=int, help="Monte Carlo samples per coordinate; 0 means exact")
    direct.add_argument("--seed", type=int, action="append")
    direct.add_argument("--override-D", type=int, dest="override_D", help="odd network degree D (N = D - 1)")
    return ap


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        data = ExperimentConfig.load(args.config, args.mode).__dict__.copy()
        data["lambda"] = data.pop("lambda_spec")
        data = {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}
    for key in ("n", "r", "k"):
        if getattr(args, key):
            data[key] = getattr(args, key)
    if args.seed:
        data["seeds"] = args.seed
    if args.samples is not None:
        data["samples"] = args.samples
    if args.override_D is not None:
        data["override_D"] = args.override_D
    if args.lambda2 is not None:
        try:
            lam2 = parse_fraction(args.lambda2)
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc
        r_max = max(data.get("r", [2]))
        data["lambda"] = {"values": ["1"] + [str(lam2)] * (r_max - 1)}
    return ExperimentConfig.from_dict(data, args.mode)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = build_config(args)
        status, files = run(config, threads=args.threads)
    except (UsageError, ParameterError, CapacityError) as exc:
        print(f"ldtensor: error: {exc}", file=sys.stderr)
        return 2
    for name, text in files.items():
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, name), "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    if status:
        failed = [line for line in text.splitlines() if line.startswith("# failed identities")]
        print(f"ldtensor: verification failed: {failed[0][2:] if failed else ''}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
