"""Two-phase training: head-only epochs with the encoder frozen, then
fine-tuning of the selected encoder layers at a second learning rate
with linear warmup/decay scheduling, gradient clipping, per-epoch
metric logging and final/best checkpointing.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import torch
from torch import nn

from .corpus import DatasetSplit

LOSSES = ("binary_cross_entropy", "cross_entropy", "crf_nll")

PHASE_FROZEN = "frozen"
PHASE_FINETUNE = "finetune"


@dataclass
class TrainSchedule:
    """Plan for a run: N total epochs, the first k with the encoder
    frozen, per-phase learning rates, warmup steps for the fine-tune
    scheduler, and optional per-epoch base-lr overrides."""

    total_epochs: int = 8
    freeze_epochs: int = 6
    lr_frozen: float = 3e-4
    lr_finetune: float = 2e-4
    warmup_steps: int = 50
    batch_size: int = 32
    loss: str = "cross_entropy"
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    lr_overrides: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.freeze_epochs <= self.total_epochs:
            raise ValueError(
                f"freeze_epochs must be in [0, {self.total_epochs}], got {self.freeze_epochs}"
            )
        if self.lr_frozen <= 0 or self.lr_finetune <= 0:
            raise ValueError("learning rates must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")

    def to_dict(self) -> dict:
        return {
            "total_epochs": self.total_epochs,
            "freeze_epochs": self.freeze_epochs,
            "lr_frozen": self.lr_frozen,
            "lr_finetune": self.lr_finetune,
            "warmup_steps": self.warmup_steps,
            "batch_size": self.batch_size,
            "loss": self.loss,
            "weight_decay": self.weight_decay,
            "grad_clip": self.grad_clip,
            "lr_overrides": {str(k): v for k, v in self.lr_overrides.items()},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainSchedule":
        obj = dict(obj)
        obj["lr_overrides"] = {int(k): v for k, v in obj.get("lr_overrides", {}).items()}
        return cls(**obj)


@dataclass(frozen=True)
class PhaseState:
    phase: str
    trainable_groups: tuple[str, ...]
    lr: float


def phase_at(epoch: int, schedule: TrainSchedule) -> PhaseState:
    """Phase for a 1-based epoch: frozen while epoch <= freeze_epochs,
    fine-tune afterwards."""
    if not 1 <= epoch <= schedule.total_epochs:
        raise ValueError(f"epoch {epoch} outside [1, {schedule.total_epochs}]")
    if epoch <= schedule.freeze_epochs:
        return PhaseState(PHASE_FROZEN, ("head",), schedule.lr_frozen)
    return PhaseState(PHASE_FINETUNE, ("head", "encoder_top"), schedule.lr_finetune)


def lr_at(step: int, base_lr: float, warmup_steps: int, total_steps: int) -> float:
    """Linear warmup from 0 to base_lr over warmup_steps, then linear
    decay to 0 at total_steps."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if total_steps <= warmup_steps:
        raise ValueError("total_steps must exceed warmup_steps")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    return base_lr * max(0.0, (total_steps - step) / (total_steps - warmup_steps))


class TrainableTask:
    """What a task must provide for the two-phase loop.

    Parameter groups: head parameters always train; encoder-top
    parameters train only in the fine-tune phase; every other encoder
    parameter stays untouched for the whole run.
    """

    module: nn.Module
    metric_name: str = "accuracy"
    compatible_losses: tuple[str, ...] = ()

    def head_parameters(self) -> list[nn.Parameter]:
        raise NotImplementedError

    def finetune_parameters(self) -> list[nn.Parameter]:
        raise NotImplementedError

    def encoder_parameters(self) -> list[nn.Parameter]:
        """All parameters that the frozen phase must not touch."""
        raise NotImplementedError

    def make_batches(self, examples: list, batch_size: int) -> Iterable:
        raise NotImplementedError

    def batch_loss(self, batch) -> torch.Tensor:
        raise NotImplementedError

    def evaluate(self, examples: list) -> tuple[float, float]:
        """(mean loss, metric) with the module in eval mode."""
        raise NotImplementedError

    def checkpoint_payload(self) -> dict:
        """Extra state the checkpoint carries besides weights."""
        return {}


@dataclass
class FitResult:
    history: list[dict]
    best_epoch: int
    best_state: dict
    final_path: Optional[Path] = None
    best_path: Optional[Path] = None

    @property
    def final_metrics(self) -> dict:
        return self.history[-1]


def _set_requires_grad(params: Iterable[nn.Parameter], flag: bool) -> None:
    for p in params:
        p.requires_grad_(flag)


def fit(
    task: TrainableTask,
    data: DatasetSplit,
    schedule: TrainSchedule,
    seed: int = 0,
    out_dir: Optional[str | Path] = None,
    run_id: str = "run",
) -> FitResult:
    """Run the full schedule over a train/validation split.

    Deterministic under a fixed seed: shuffling, dropout and
    initialization all derive from it. Emits one JSON metrics object per
    epoch (to ``<out_dir>/metrics.jsonl`` when out_dir is given) and
    returns the final and best-validation checkpoints.
    """
    if schedule.loss not in task.compatible_losses:
        raise ValueError(
            f"loss {schedule.loss!r} incompatible with task "
            f"(expects one of {task.compatible_losses})"
        )
    torch.manual_seed(seed)
    rng = random.Random(seed)

    module = task.module
    head_params = list(task.head_parameters())
    finetune_params = list(task.finetune_parameters())
    encoder_params = list(task.encoder_parameters())

    train_examples = list(data.train)
    steps_per_epoch = math.ceil(len(train_examples) / schedule.batch_size)
    finetune_epochs = schedule.total_epochs - schedule.freeze_epochs
    total_finetune_steps = max(1, finetune_epochs * steps_per_epoch)

    metrics_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.jsonl"
        metrics_path.write_text("")

    history: list[dict] = []
    best_epoch, best_val_loss, best_state = 0, float("inf"), None
    optimizer = None
    current_phase = None
    finetune_step = 0

    for epoch in range(1, schedule.total_epochs + 1):
        state = phase_at(epoch, schedule)
        if state.phase != current_phase:
            current_phase = state.phase
            _set_requires_grad(encoder_params, False)
            _set_requires_grad(head_params, True)
            trainable = list(head_params)
            if state.phase == PHASE_FINETUNE:
                _set_requires_grad(finetune_params, True)
                trainable += finetune_params
            optimizer = torch.optim.AdamW(
                trainable, lr=state.lr, weight_decay=schedule.weight_decay
            )
        base_lr = schedule.lr_overrides.get(epoch, state.lr)

        module.train()
        shuffled = train_examples[:]
        rng.shuffle(shuffled)
        epoch_loss, n_batches = 0.0, 0
        for batch in task.make_batches(shuffled, schedule.batch_size):
            if state.phase == PHASE_FINETUNE:
                lr = lr_at(finetune_step, base_lr, schedule.warmup_steps, total_finetune_steps)
                finetune_step += 1
            else:
                lr = base_lr
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss = task.batch_loss(batch)
            loss.backward()
            if schedule.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(
                    [p for g in optimizer.param_groups for p in g["params"]],
                    schedule.grad_clip,
                )
            optimizer.step()
            epoch_loss += float(loss.detach())
            n_batches += 1

        module.eval()
        with torch.no_grad():
            train_loss, train_metric = task.evaluate(train_examples)
            val_loss, val_metric = task.evaluate(list(data.validation))

        record = {
            "epoch": epoch,
            "phase": state.phase,
            "lr": base_lr,
            "train_batch_loss": epoch_loss / max(1, n_batches),
            "train_loss": train_loss,
            f"train_{task.metric_name}": train_metric,
            "val_loss": val_loss,
            f"val_{task.metric_name}": val_metric,
        }
        history.append(record)
        if metrics_path is not None:
            with metrics_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

        if val_loss < best_val_loss:
            best_val_loss = val_loss
            best_epoch = epoch
            best_state = {
                k: v.detach().clone() for k, v in module.state_dict().items()
            }

    result = FitResult(history=history, best_epoch=best_epoch, best_state=best_state)
    if out_dir is not None:
        payload = task.checkpoint_payload()
        payload["schedule"] = schedule.to_dict()
        payload["seed"] = seed
        final_path = out_dir / f"{run_id}.{schedule.total_epochs}.final.pt"
        save_checkpoint(final_path, module.state_dict(), payload)
        best_path = out_dir / f"{run_id}.{best_epoch}.best.pt"
        save_checkpoint(best_path, best_state, payload)
        result.final_path = final_path
        result.best_path = best_path
    return result


def save_checkpoint(path: str | Path, state_dict: dict, payload: dict) -> None:
    torch.save({"state_dict": state_dict, **payload}, path)


def load_checkpoint(path: str | Path) -> dict:
    return torch.load(path, map_location="cpu", weights_only=False)
