"""Command line interface.

Module scope stays stdlib-only on purpose: ``--threads`` must export BLAS and
OpenMP caps into the environment before numpy is first imported, so all
numeric modules are imported lazily inside the command dispatch.
"""

import argparse
import json
import sys
from pathlib import Path

from .errors import SkelgaitError

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _common_flags(parser, epochs: bool = False) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value config file")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument(
        "--threads", type=int, default=None, help="cap BLAS/OpenMP threads (0 = leave as is)"
    )
    if epochs:
        parser.add_argument("--epochs", type=int, default=None, help="override epoch count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skelgait",
        description="Multi-level skeleton-graph gait recognition pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic gait dataset on disk")
    _common_flags(p)

    p = sub.add_parser("pretrain", help="self-supervised sparse prediction pre-training")
    _common_flags(p, epochs=True)
    p.add_argument("--data", type=Path, required=True, help="dataset manifest.txt")
    p.add_argument(
        "--resume", type=Path, default=None, help="continue from an earlier pre-train checkpoint"
    )

    p = sub.add_parser("finetune", help="recognition fine-tuning")
    _common_flags(p, epochs=True)
    p.add_argument("--data", type=Path, required=True, help="dataset manifest.txt")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument(
        "--init", type=Path, default=None, help="pre-trained checkpoint to start from"
    )
    group.add_argument(
        "--from-scratch", action="store_true", help="skip pre-trained initialization"
    )

    p = sub.add_parser("evaluate", help="closed-set identification on a dataset split")
    _common_flags(p)
    p.add_argument("--data", type=Path, required=True, help="dataset manifest.txt")
    p.add_argument("--checkpoint", type=Path, required=True, help="fine-tuned checkpoint")
    p.add_argument(
        "--split", choices=("train", "test"), default="test", help="which split to score"
    )

    p = sub.add_parser("export-relations", help="dump per-frame relation matrices")
    _common_flags(p)
    p.add_argument("--data", type=Path, required=True, help="dataset manifest.txt")
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint (either stage)")
    p.add_argument("--sequence", type=str, default=None, help="source id (default: first test)")
    p.add_argument("--limit", type=int, default=None, help="export at most this many frames")

    return parser


def _effective_config(args):
    from .config import RunConfig, load_config, override

    config = load_config(args.config) if args.config else RunConfig()
    changes = {"seed": args.seed, "threads": args.threads}
    if args.command == "pretrain":
        changes["pretrain_epochs"] = getattr(args, "epochs", None)
    elif args.command == "finetune":
        changes["finetune_epochs"] = getattr(args, "epochs", None)
    return override(config, **changes)


def _pin_threads(count: int) -> None:
    import os

    if count > 0:
        for name in _THREAD_VARS:
            os.environ[name] = str(count)


def _run(args) -> int:
    from .config import save_config

    config = _effective_config(args)
    _pin_threads(config.threads)

    # numpy-backed modules load only after the thread caps are exported
    from . import pipeline
    from .skeletons import load_dataset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.txt")

    if args.command == "synth":
        manifest = pipeline.synth(config, out)
        print(f"wrote {manifest}")
        return 0

    dataset = load_dataset(args.data)
    if args.command == "pretrain":
        result = pipeline.pretrain(config, dataset, out, resume=args.resume)
        print(f"wrote {result['checkpoint']}")
        print(f"final ssp_loss={result['losses'][-1]!r}" if result["losses"] else "no epochs run")
    elif args.command == "finetune":
        result = pipeline.finetune(config, dataset, out, init=args.init)
        print(f"wrote {result['checkpoint']}")
        print(
            f"milestone_epoch={result['milestone']} "
            f"final_train_rank1={result['train_rank1']!r}"
        )
    elif args.command == "evaluate":
        result = pipeline.evaluate(config, dataset, args.checkpoint, out, split=args.split)
        print(f"wrote {result['report']}")
        print(f"rank1={result['rank1']!r} nauc={result['nauc']!r}")
    else:  # export-relations
        written = pipeline.export_relations(
            config, dataset, args.checkpoint, out, sequence_id=args.sequence, limit=args.limit
        )
        print(f"wrote {len(written)} files under {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (SkelgaitError, OSError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
