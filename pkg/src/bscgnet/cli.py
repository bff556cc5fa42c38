"""Command-line entry point: ``bscgnet {train,infer,eval,synth,summary,gradcheck,ablate}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .pipeline.data import DataError
from .pipeline.train import NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _cmd_train(args) -> int:
    from .pipeline.train import TrainConfig, train

    config = TrainConfig.from_json(args.config)
    result = train(config)
    last = result.history[-1]
    print(f"trained {result.steps} steps; final loss {last['loss']:.4f}, train mae {last['mae']:.4f}")
    print(f"checkpoint: {result.final_checkpoint}")
    return EXIT_OK


def _cmd_infer(args) -> int:
    from .pipeline.infer import infer

    written = infer(args.ckpt, args.input, args.out)
    print(f"wrote {len(written)} saliency maps to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .pipeline.evaluate import evaluate

    report = evaluate(args.pred, args.gt, args.out)
    print(json.dumps(report.summary(), indent=2))
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .pipeline.synth import SyntheticSpec, synth_generate

    out = synth_generate(SyntheticSpec(count=args.count, size=args.size, seed=args.seed), args.out)
    print(f"wrote {args.count} image/mask pairs to {out}")
    return EXIT_OK


def _cmd_summary(args) -> int:
    from .network import ModelConfig
    from .summary import summary_table

    if args.config:
        raw = json.loads(Path(args.config).read_text())
        model = ModelConfig.from_dict(raw.get("model", raw))
    else:
        model = ModelConfig(preset="paper", input_size=256)
    print(summary_table(model, args.size))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .verification import TOLERANCE, run_suite

    rows = run_suite(seed=args.seed)
    ok = True
    for name, err, n in rows:
        passed = err <= TOLERANCE
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<18} max rel err {err:.2e} over {n} entries")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_ablate(args) -> int:
    from .pipeline.ablation import format_table, run_ablation

    rows = run_ablation(args.data, epochs=args.epochs, size=args.size, seed=args.seed,
                        out_dir=args.out)
    print(format_table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bscgnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("train", help="train from a JSON config")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=_cmd_train)

    s = sub.add_parser("infer", help="write saliency PNGs for a directory of images")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_infer)

    s = sub.add_parser("eval", help="score predictions against ground-truth masks")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_synth)

    s = sub.add_parser("summary", help="parameter and FLOP table")
    s.add_argument("--config")
    s.add_argument("--size", type=int, default=256)
    s.set_defaults(fn=_cmd_summary)

    s = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=_cmd_gradcheck)

    s = sub.add_parser("ablate", help="train and score every ablation row")
    s.add_argument("--data", required=True, help="directory with images/ and masks/")
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=12)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=_cmd_ablate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"bscgnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"bscgnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"bscgnet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"bscgnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
