"""Command line for the masked fine-tuning job."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .data import DatasetError
from .train import TrainJob, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="masked-sft-train",
        description="Fine-tune adapters on masked dialogue data.",
    )
    parser.add_argument("--dataset", required=True, help="SFT JSONL path")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--base-model", default="tiny-causal-lm")
    parser.add_argument("--learning-rate", type=float, default=2e-5)
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--batch-size", type=int, default=2)
    parser.add_argument("--grad-accum", type=int, default=2)
    parser.add_argument("--sequence-length", type=int, default=4096)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--log-level", default="INFO")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO))
    job = TrainJob(
        dataset=args.dataset,
        out_dir=args.out_dir,
        base_model=args.base_model,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        per_device_batch_size=args.batch_size,
        gradient_accumulation_steps=args.grad_accum,
        sequence_length=args.sequence_length,
        seed=args.seed,
    )
    try:
        result = train(job)
    except (DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    print(
        json.dumps(
            {
                "checkpoint": result.checkpoint,
                "final_loss": result.final_loss,
                "trainable_tokens": result.trainable_tokens,
            }
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
