"""Training and evaluation of the sequence classifier.

Training is deterministic given the seed: the shuffle stream and the
dropout stream are separate generators derived from it, gradients are
averaged over each minibatch in a fixed sample order, and the optimizer
sees parameters in their stable named order. Dropout runs only here;
evaluation always uses the deterministic forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .dataset import LabeledSample
from .metrics import EvalReport, compute_report
from .model import ConfigError, ModelConfig, ModelParams, classify_sequence
from .optim import make_optimizer
from .skeleton import CLASS_CODES, class_index

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "cross_entropy_loss",
    "train",
    "evaluate",
]

PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 100
    learning_rate: float = 0.001
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patience: int | None = None  # early stop off by default

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        # zero is allowed so a run can be checked for exact no-op behavior
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError(f"patience must be >= 1 when set, got {self.patience}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


def cross_entropy_loss(predicted: T.Tensor, true_class: int) -> T.Tensor:
    """-log of the probability assigned to the true class.

    The probability is floored at 1e-12 before the log so a confidently
    wrong prediction yields a large finite loss instead of infinity.
    """
    if predicted.data.ndim != 1:
        raise T.ContractError(
            f"predicted must be a probability vector, got shape {predicted.shape}"
        )
    k = predicted.shape[0]
    if not 0 <= true_class < k:
        raise T.ContractError(f"true_class {true_class} outside [0, {k})")
    p = float(predicted.data[true_class])
    floored = max(p, PROBABILITY_FLOOR)
    out = T.Tensor(np.asarray(-math.log(floored)))

    def vjp(upstream: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(predicted.data)
        if p > PROBABILITY_FLOOR:  # below the floor the loss is locally constant
            grad[true_class] = -float(upstream) / p
        return (grad,)

    T.record_operation(out, (predicted,), vjp)
    return out


def _as_pairs(samples) -> list[tuple[tuple[T.Tensor, ...], int]]:
    pairs = []
    for sample in samples:
        if isinstance(sample, LabeledSample):
            pairs.append((sample.tensor_frames, class_index(sample.label)))
        else:
            frames, target = sample
            pairs.append((tuple(frames), int(target)))
    return pairs


def _validate_against_model(pairs, config: ModelConfig) -> None:
    for i, (frames, target) in enumerate(pairs):
        shape = frames[0].shape
        if shape != (1, config.input_grid, config.input_grid):
            raise ConfigError(
                f"sample {i} frames have shape {shape}, model expects "
                f"(1, {config.input_grid}, {config.input_grid})"
            )
        if not 0 <= target < config.num_classes:
            raise ConfigError(
                f"sample {i} class {target} outside [0, {config.num_classes})"
            )


def train(
    config: ModelConfig,
    params: ModelParams,
    samples,
    train_config: TrainConfig,
    callbacks: Sequence[Callable[[EpochRecord], bool | None]] = (),
):
    """Fit ``params`` in place-order on the samples; returns (params, history).

    Samples may be LabeledSamples or (frames, class_index) pairs. The
    returned params object is a fresh container; the input is untouched.
    History holds one EpochRecord per completed epoch. A callback may
    return True to stop training early; a patience setting stops after
    that many epochs without a loss improvement.
    """
    pairs = _as_pairs(samples)
    if not pairs:
        raise ConfigError("training needs at least one sample")
    _validate_against_model(pairs, config)

    shuffle_rng = np.random.default_rng([train_config.seed, 0])
    dropout_rng = np.random.default_rng([train_config.seed, 1])
    optimizer = make_optimizer(
        train_config.optimizer,
        train_config.learning_rate,
        **(
            {"beta1": train_config.beta1, "beta2": train_config.beta2,
             "eps": train_config.eps}
            if train_config.optimizer == "adam"
            else {}
        ),
    )

    history: list[EpochRecord] = []
    best_loss = math.inf
    stale_epochs = 0
    for epoch in range(1, train_config.epochs + 1):
        order = shuffle_rng.permutation(len(pairs))
        loss_sum = 0.0
        hits = 0
        for start in range(0, len(order), train_config.batch_size):
            batch = order[start:start + train_config.batch_size]
            named = params.named()
            grad_sums = {name: None for name in named}
            for idx in batch:
                frames, target = pairs[idx]
                with T.GradientTape() as tape:
                    params.watch(tape)
                    probs = classify_sequence(
                        frames, config, params, dropout_rng=dropout_rng
                    )
                    loss = cross_entropy_loss(probs, target)
                grads = T.backward(tape, loss)
                loss_sum += float(loss.data)
                hits += int(np.argmax(probs.data) == target)
                for name, tensor in named.items():
                    g = grads[tensor].data
                    grad_sums[name] = g if grad_sums[name] is None else grad_sums[name] + g
            scale = 1.0 / len(batch)
            grad_means = {name: g * scale for name, g in grad_sums.items()}
            values = {name: t.data for name, t in named.items()}
            updated = optimizer.step(values, grad_means)
            params.load_named(
                {name: T.Tensor(arr.astype(values[name].dtype, copy=False))
                 for name, arr in updated.items()}
            )
        record = EpochRecord(
            epoch=epoch,
            loss=loss_sum / len(pairs),
            accuracy=hits / len(pairs),
        )
        history.append(record)
        stop = any([cb(record) for cb in callbacks])  # run every callback
        if record.loss < best_loss - 1e-9:
            best_loss = record.loss
            stale_epochs = 0
        else:
            stale_epochs += 1
        if train_config.patience is not None and stale_epochs >= train_config.patience:
            break
        if stop:
            break
    return params, history


def evaluate(
    config: ModelConfig,
    params: ModelParams,
    samples,
    labels: Sequence[str] | None = None,
) -> EvalReport:
    """Deterministic forward pass over a test set, scored per class."""
    pairs = _as_pairs(samples)
    if not pairs:
        raise ConfigError("evaluation needs at least one sample")
    _validate_against_model(pairs, config)
    if labels is None:
        labels = (
            list(CLASS_CODES)
            if config.num_classes == len(CLASS_CODES)
            else [str(i) for i in range(config.num_classes)]
        )
    true_classes, predicted = [], []
    for frames, target in pairs:
        probs = classify_sequence(frames, config, params)
        true_classes.append(target)
        predicted.append(int(np.argmax(probs.data)))
    return compute_report(true_classes, predicted, labels)
