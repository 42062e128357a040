"""Command line entry point: ``tsacl synth | run | inspect | oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import inspect_checkpoint
from .data import SyntheticSpec, generate_synthetic, write_dataset
from .runner import ExperimentConfig, emit_report, oracle_check, run_experiment


def _synth(args) -> dict:
    spec = json.loads(Path(args.spec).read_text())
    try:
        spec = SyntheticSpec(**spec)
    except TypeError as e:
        raise ValueError(f"synthetic spec: {e}") from None
    train, test = generate_synthetic(spec)
    write_dataset(train, test, args.out)
    return {"out": str(args.out), "train_n": train.n, "test_n": test.n}


def _run(args) -> dict:
    config = ExperimentConfig.from_file(args.config)
    out = args.out or config.output_dir
    if out is None:
        raise ValueError("no output directory: pass --out or set output_dir")
    report = run_experiment(config, out)
    emit_report(report, out)
    return {"out": str(out), **report["aggregate"]}


def _inspect(args) -> dict:
    return inspect_checkpoint(args.checkpoint)


def _oracle(args) -> dict:
    return oracle_check(ExperimentConfig.from_file(args.config), args.checkpoint, args.seed)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsacl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset directory")
    s.add_argument("--spec", required=True, help="JSON file with SyntheticSpec fields")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_synth)

    s = sub.add_parser("run", help="run an experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=_run)

    s = sub.add_parser("inspect", help="print checkpoint metadata")
    s.add_argument("checkpoint")
    s.set_defaults(func=_inspect)

    s = sub.add_parser("oracle", help="compare recursive weights with the joint ridge solve")
    s.add_argument("--config", required=True)
    s.add_argument("--checkpoint", help="compare this checkpoint instead of rerunning")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        result = args.func(args)
    except Exception as e:  # noqa: BLE001 - every failure becomes one parsable line
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
