"""Command-line entry point: ``beam run|validate|resume|eval``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiment import (
    CheckpointError,
    ConfigError,
    evaluate,
    load_config,
    resume,
    run,
    validate,
)
from .training import TrainingDiverged

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_CHECKPOINT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--epochs-override", metavar="N|ML+ADV",
                       help="total epochs, or explicit per-phase counts")

    p = sub.add_parser("run", help="train from a config file")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("validate", help="check a config file without running")
    p.add_argument("config")
    p = sub.add_parser("resume", help="continue training from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("eval", help="divergences and samples for a saved model")
    p.add_argument("checkpoint")
    p.add_argument("dataset", help="config file, built-in mixture name, or CSV of rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    p.add_argument("--steps", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            cfg = validate(args.config)
            print(f"{args.config}: ok ({cfg['train.epochs_ml']} ML + {cfg['train.epochs_adv']} adversarial epochs)")
        elif args.command == "eval":
            report = evaluate(args.checkpoint, args.dataset, seed=args.seed, steps=args.steps,
                              out_dir=args.out_dir)
            print(f"forward_kl={report.forward_kl!r} reverse_kl={report.reverse_kl!r}")
        else:
            cfg = load_config(args.config).with_overrides(args.seed, args.out_dir, args.epochs_override)
            result = run(cfg) if args.command == "run" else resume(args.checkpoint, cfg)
            print(f"wrote {len(result.records)} epochs to {result.out_dir}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
