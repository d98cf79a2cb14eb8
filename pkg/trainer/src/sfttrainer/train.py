"""The training job: masked cross-entropy over adapter parameters with
warmup plus cosine decay, deterministic under a fixed seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn

from .data import PAD, DatasetError, EncodedExample, load_dataset
from .model import AdapterConfig, ModelConfig, TinyCausalLM, apply_adapters, trainable_parameters

logger = logging.getLogger(__name__)


@dataclass
class TrainJob:
    dataset: str
    out_dir: str
    base_model: str = "tiny-causal-lm"
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    learning_rate: float = 2e-5
    epochs: int = 3
    per_device_batch_size: int = 2
    gradient_accumulation_steps: int = 2
    warmup_ratio: float = 0.05
    sequence_length: int = 4096
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def hyperparameters(self) -> dict:
        return {
            "base_model": self.base_model,
            "lora_r": self.adapter.rank,
            "lora_alpha": self.adapter.alpha,
            "lora_dropout": self.adapter.dropout,
            "lora_target_modules": list(self.adapter.target_modules),
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "per_device_batch_size": self.per_device_batch_size,
            "gradient_accumulation_steps": self.gradient_accumulation_steps,
            "warmup_ratio": self.warmup_ratio,
            "sequence_length": self.sequence_length,
            "scheduler": "cosine",
            "optimizer": "adamw",
            "seed": self.seed,
        }


@dataclass
class TrainResult:
    checkpoint: str
    final_loss: float
    initial_loss: float
    trainable_tokens: int
    loss_curve_path: str
    report_path: str
    dropped_overlong: int


def _batches(examples: list[EncodedExample], batch_size: int):
    for start in range(0, len(examples), batch_size):
        yield examples[start : start + batch_size]


def _collate(batch: list[EncodedExample]) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(e) for e in batch)
    tokens = torch.full((len(batch), width), PAD, dtype=torch.long)
    trainable = torch.zeros((len(batch), width), dtype=torch.bool)
    for row, example in enumerate(batch):
        tokens[row, : len(example)] = torch.tensor(example.tokens, dtype=torch.long)
        trainable[row, : len(example)] = torch.tensor(example.trainable, dtype=torch.bool)
    return tokens, trainable


def masked_loss(logits: torch.Tensor, tokens: torch.Tensor, trainable: torch.Tensor) -> tuple[torch.Tensor, int]:
    """Cross entropy over positions whose target token is trainable."""
    targets = tokens[:, 1:]
    mask = trainable[:, 1:]
    if int(mask.sum()) == 0:
        raise DatasetError("batch has no trainable target tokens")
    picked_logits = logits[:, :-1, :][mask]
    picked_targets = targets[mask]
    return nn.functional.cross_entropy(picked_logits, picked_targets), int(mask.sum())


def _lr_scale(step: int, total: int, warmup: int) -> float:
    if step < warmup:
        return (step + 1) / max(1, warmup)
    progress = (step - warmup) / max(1, total - warmup)
    return 0.5 * (1 + math.cos(math.pi * min(1.0, progress)))


def train(job: TrainJob) -> TrainResult:
    torch.manual_seed(job.seed)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    examples, dropped = load_dataset(job.dataset, job.sequence_length)
    trainable_tokens = sum(sum(e.trainable) for e in examples)
    logger.info(
        "dataset: %d examples, %d trainable tokens, %d dropped over-long",
        len(examples), trainable_tokens, dropped,
    )

    model = TinyCausalLM(job.model)
    wrapped = apply_adapters(model, job.adapter)
    if wrapped == 0:
        raise ValueError("no adapter target modules matched the model")
    parameters = trainable_parameters(model)
    optimizer = torch.optim.AdamW(parameters, lr=job.learning_rate, weight_decay=0.01)

    batches_per_epoch = math.ceil(len(examples) / job.per_device_batch_size)
    optim_steps_per_epoch = math.ceil(batches_per_epoch / job.gradient_accumulation_steps)
    total_steps = optim_steps_per_epoch * job.epochs
    warmup_steps = math.ceil(job.warmup_ratio * total_steps)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: _lr_scale(step, total_steps, warmup_steps)
    )

    loss_curve: list[dict] = []
    epoch_means: list[float] = []
    try:
        model.train()
        for epoch in range(job.epochs):
            epoch_losses: list[float] = []
            accumulated = 0
            for batch in _batches(examples, job.per_device_batch_size):
                tokens, trainable = _collate(batch)
                loss, _count = masked_loss(model(tokens), tokens, trainable)
                (loss / job.gradient_accumulation_steps).backward()
                epoch_losses.append(float(loss.detach()))
                accumulated += 1
                if accumulated % job.gradient_accumulation_steps == 0:
                    optimizer.step()
                    scheduler.step()
                    optimizer.zero_grad()
            if accumulated % job.gradient_accumulation_steps != 0:
                optimizer.step()
                scheduler.step()
                optimizer.zero_grad()
            mean = sum(epoch_losses) / len(epoch_losses)
            epoch_means.append(mean)
            loss_curve.append({"epoch": epoch + 1, "mean_loss": mean, "batch_losses": epoch_losses})
            logger.info("epoch %d mean loss %.6f", epoch + 1, mean)
    except torch.cuda.OutOfMemoryError as exc:  # pragma: no cover - no GPU in CI
        raise RuntimeError(
            "out of memory during training; lower sequence_length or per_device_batch_size"
        ) from exc

    checkpoint_path = out_dir / "adapter_checkpoint.pt"
    torch.save(
        {
            "model_config": asdict(job.model),
            "adapter_config": asdict(job.adapter),
            "state_dict": {
                name: tensor for name, tensor in model.state_dict().items() if "lora_" in name
            },
        },
        checkpoint_path,
    )

    curve_path = out_dir / "loss_curve.json"
    curve_path.write_text(json.dumps(loss_curve, indent=2) + "\n", encoding="utf-8")

    result_path = out_dir / "result.json"
    result_path.write_text(
        json.dumps(
            {
                "checkpoint": str(checkpoint_path),
                "final_loss": epoch_means[-1],
                "trainable_tokens": trainable_tokens,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(
            {
                "hyperparameters": job.hyperparameters(),
                "adapted_modules": wrapped,
                "examples": len(examples),
                "dropped_overlong": dropped,
                "initial_loss": epoch_means[0],
                "final_loss": epoch_means[-1],
                "optimizer_steps": total_steps,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    return TrainResult(
        checkpoint=str(checkpoint_path),
        final_loss=epoch_means[-1],
        initial_loss=epoch_means[0],
        trainable_tokens=trainable_tokens,
        loss_curve_path=str(curve_path),
        report_path=str(report_path),
        dropped_overlong=dropped,
    )


def load_checkpoint(path: str | Path) -> TinyCausalLM:
    """Rebuild a model from a saved adapter checkpoint."""
    payload = torch.load(path, weights_only=True)
    model = TinyCausalLM(ModelConfig(**payload["model_config"]))
    adapter = AdapterConfig(**{
        **payload["adapter_config"],
        "target_modules": tuple(payload["adapter_config"]["target_modules"]),
    })
    apply_adapters(model, adapter)
    missing, unexpected = model.load_state_dict(payload["state_dict"], strict=False)
    if unexpected:
        raise ValueError(f"checkpoint has unknown tensors: {unexpected[:3]}")
    return model
