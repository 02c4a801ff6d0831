"""Interleaved multi-task training loop.

Every batch contains examples of a single task, and while two or more tasks
still have batches left in the epoch, consecutive batches always come from
different tasks. Optimization is plain SGD by default with Adam behind a
config flag; everything is deterministic given the config seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import CoherenceModel, zeros_like_params

# One training example: the texts a head consumes, plus the class label.
HeadExample = tuple[tuple[str, ...], int]


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 8
    grad_accum_steps: int = 1
    dropout_encoder: float = 0.0
    dropout_head: float = 0.0
    seed: int = 0
    early_stop_patience: int = 3
    adam: bool = False
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise TrainingError("learning_rate, epochs, and batch_size must be positive")
        if self.grad_accum_steps <= 0 or self.early_stop_patience <= 0:
            raise TrainingError("grad_accum_steps and early_stop_patience must be positive")
        for p in (self.dropout_encoder, self.dropout_head):
            if not 0.0 <= p < 1.0:
                raise TrainingError("dropout probabilities must be in [0, 1)")


# Named presets mirroring the reference fine-tuning settings: "proxy" for
# the five proxy tasks, "coherence" for scoring/reasoning fine-tuning.
PRESETS: dict[str, TrainConfig] = {
    "proxy": TrainConfig(
        learning_rate=5e-5,
        epochs=3,
        batch_size=4,
        grad_accum_steps=2,
        dropout_encoder=0.5,
        dropout_head=0.3,
        adam=True,
    ),
    "coherence": TrainConfig(
        learning_rate=5e-4,
        epochs=50,
        batch_size=4,
        grad_accum_steps=2,
        dropout_encoder=0.3,
        dropout_head=0.1,
        adam=True,
    ),
}


def preset(name: str, **overrides) -> TrainConfig:
    if name not in PRESETS:
        raise TrainingError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


def _derived_seed(*parts) -> int:
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def interleave_schedule(batch_counts: dict[str, int]) -> list[str]:
    """Deterministic task schedule: greedy most-remaining-first, never
    repeating the previous task while at least two tasks have batches left."""
    remaining = {t: n for t, n in batch_counts.items() if n > 0}
    schedule: list[str] = []
    prev: str | None = None
    while remaining:
        candidates = sorted(remaining, key=lambda t: (-remaining[t], t))
        if len(remaining) >= 2 and prev in remaining:
            candidates = [t for t in candidates if t != prev]
        task = candidates[0]
        schedule.append(task)
        remaining[task] -= 1
        if remaining[task] == 0:
            del remaining[task]
        prev = task
    return schedule


def make_batches(
    examples: Sequence[HeadExample], batch_size: int, seed: int
) -> list[list[HeadExample]]:
    order = list(range(len(examples)))
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    shuffled = [examples[i] for i in order]
    return [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]


def eval_accuracy(model: CoherenceModel, examples: Sequence[HeadExample], head: str) -> float:
    if not examples:
        return 0.0
    correct = sum(1 for texts, label in examples if model.predict(head, texts) == label)
    return correct / len(examples)


class _Optimizer:
    def __init__(self, config: TrainConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.t = 0
        if config.adam:
            self.m = zeros_like_params(params)
            self.v = zeros_like_params(params)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        if not cfg.adam:
            for k in params:
                params[k] -= cfg.learning_rate * grads[k]
        else:
            self.t += 1
            b1, b2 = cfg.adam_beta1, cfg.adam_beta2
            for k in params:
                self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
                self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
                m_hat = self.m[k] / (1 - b1**self.t)
                v_hat = self.v[k] / (1 - b2**self.t)
                params[k] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        for k, v in params.items():
            if not np.all(np.isfinite(v)):
                raise TrainingError(
                    f"training diverged: non-finite values in {k!r} after update "
                    "(reduce learning_rate)"
                )


@dataclass
class EpochRecord:
    epoch: int
    task_losses: dict[str, float]
    dev_metric: float | None = None

    def lines(self) -> list[dict]:
        out = []
        for task, loss in sorted(self.task_losses.items()):
            out.append(
                {"epoch": self.epoch, "task": task, "loss": loss, "dev_metric": self.dev_metric}
            )
        return out


@dataclass
class TrainResult:
    epochs: list[EpochRecord] = field(default_factory=list)
    schedules: list[list[str]] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int | None = None

    def write_log(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.epochs:
                for line in rec.lines():
                    fh.write(json.dumps(line) + "\n")


def train_interleaved(
    model: CoherenceModel,
    task_datasets: dict[str, Sequence[HeadExample]],
    config: TrainConfig,
    dev_datasets: dict[str, Sequence[HeadExample]] | None = None,
) -> TrainResult:
    """Train the shared model on several head datasets jointly.

    Updates apply every grad_accum_steps batches (gradients averaged over
    the accumulated batches, leftovers flushed at epoch end). When dev sets
    are given, the mean dev accuracy drives early stopping: training stops
    after early_stop_patience epochs without improvement and the best
    parameters are restored.
    """
    if not task_datasets:
        raise TrainingError("no task datasets given")
    for task, examples in task_datasets.items():
        if not examples:
            raise TrainingError(f"task {task!r} has an empty dataset")
        if task not in model.head_specs:
            raise TrainingError(f"model has no head {task!r}")

    result = TrainResult()
    optimizer = _Optimizer(config, model.params)
    best_metric = -np.inf
    best_params: dict[str, np.ndarray] | None = None
    epochs_since_best = 0

    for epoch in range(config.epochs):
        batches = {
            task: make_batches(examples, config.batch_size, _derived_seed(config.seed, epoch, task))
            for task, examples in task_datasets.items()
        }
        schedule = interleave_schedule({t: len(b) for t, b in batches.items()})
        result.schedules.append(schedule)

        cursor = {task: 0 for task in batches}
        accum = zeros_like_params(model.params)
        n_accum = 0
        losses: dict[str, list[float]] = {task: [] for task in batches}

        for step, task in enumerate(schedule):
            batch = batches[task][cursor[task]]
            cursor[task] += 1
            loss, grads = model.loss_and_grad(
                task,
                batch,
                dropout_encoder=config.dropout_encoder,
                dropout_head=config.dropout_head,
                mask_seed=_derived_seed(config.seed, "mask", epoch, step),
            )
            losses[task].append(loss)
            for k in accum:
                accum[k] += grads[k]
            n_accum += 1
            if n_accum == config.grad_accum_steps:
                for k in accum:
                    accum[k] /= n_accum
                optimizer.step(model.params, accum)
                accum = zeros_like_params(model.params)
                n_accum = 0
        if n_accum > 0:
            for k in accum:
                accum[k] /= n_accum
            optimizer.step(model.params, accum)

        record = EpochRecord(
            epoch=epoch,
            task_losses={t: float(np.mean(v)) for t, v in losses.items() if v},
        )

        if dev_datasets:
            per_task = [
                eval_accuracy(model, examples, task)
                for task, examples in sorted(dev_datasets.items())
                if examples
            ]
            record.dev_metric = float(np.mean(per_task)) if per_task else 0.0
            result.epochs.append(record)
            if record.dev_metric > best_metric:
                best_metric = record.dev_metric
                best_params = {k: v.copy() for k, v in model.params.items()}
                result.best_epoch = epoch
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= config.early_stop_patience:
                    result.stopped_early = True
                    break
        else:
            result.epochs.append(record)

    if best_params is not None:
        model.params.update(best_params)
    return result
