"""Command-line entry point: ``ssvae {generate,train,eval,compare}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .checkpoint import MODEL_KINDS, read_model_meta
from .config import dump_config, load_config
from .model import DivergenceError

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", type=Path, help="TOML config; defaults are used when omitted")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--seed", type=int, help="overrides the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssvae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _common(p, out_required=False)
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")

    p = sub.add_parser("train", help="train one model on the train split")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--model", choices=MODEL_KINDS, required=True)

    p = sub.add_parser("eval", help="per-block metrics on the test split")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)

    p = sub.add_parser("compare", help="four-way comparison report and plots")
    _common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoints", type=Path, nargs="+", required=True,
                   help="checkpoint directories; rows are named by model kind")
    return parser


def _row_names(paths) -> dict[str, str]:
    """Name compare rows by checkpoint kind, suffixing repeats."""
    names: dict[str, str] = {}
    for path in paths:
        try:
            kind = read_model_meta(path)["kind"]
        except pipeline.VALIDATION_ERRORS:
            kind = Path(path).name
        name, k = kind, 2
        while name in names:
            name, k = f"{kind}_{k}", k + 1
        names[name] = str(path)
    return names


def run(args) -> int:
    if args.command == "generate" and args.print_defaults:
        sys.stdout.write(dump_config(load_config(None, args.seed)))
        return EXIT_OK
    cfg = load_config(args.config, args.seed)
    if args.command == "generate":
        if args.out is None:
            raise pipeline.ValidationError("generate: --out is required")
        path, train, test = pipeline.generate(cfg, args.out)
        print(f"wrote {len(train) + len(test)} blocks to {path} "
              f"(train {len(train)}: {train}, test {len(test)}: {test})")
    elif args.command == "train":
        path = pipeline.train(cfg, args.dataset, args.model, args.out)
        print(f"wrote {args.model} checkpoint to {path}")
    elif args.command == "eval":
        doc = pipeline.evaluate(args.checkpoint, args.dataset, args.out, cfg.metrics)
        s = doc["summary"]
        print(f"{doc['model']}: RPE {s['rpe']}, SHR {s['shr']} over {len(doc['blocks'])} test blocks")
    elif args.command == "compare":
        missing = [str(p) for p in args.checkpoints if not (p / "model.json").is_file()]
        if missing:
            raise pipeline.ValidationError("missing checkpoints: " + ", ".join(missing))
        result = pipeline.compare(args.dataset, _row_names(args.checkpoints), args.out, cfg.metrics)
        print(f"RPE ordering: {result['rpe_ordering']}")
        print(f"SHR ordering: {result['shr_ordering']}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except DivergenceError as exc:
        epoch = "unknown" if exc.epoch is None else exc.epoch
        print(f"error: training diverged at epoch {epoch}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except pipeline.VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
