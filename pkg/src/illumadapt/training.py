"""Shared classifier training loop and batching conventions.

Determinism contract: samples are first brought into a canonical order
(sorted by domain, identity, path), and only then shuffled by the seeded
generator. Training is therefore invariant to the order in which callers
assembled their manifests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrainingDivergedError, ValidationError
from .nn import Sequential, cross_entropy
from .optim import SGD
from .synth import Sample


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings shared by every trainer in the package.

    ``epochs`` is normally >= 1; 0 is tolerated here because fine-tuning
    documents a zero-epoch no-op bound, and the from-scratch trainers
    reject it themselves.
    """

    learning_rate: float
    epochs: int
    batch_size: int
    seed: int
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")


def to_model_range(images: np.ndarray) -> np.ndarray:
    """[0, 1] pixels to the [-1, 1] convention shared by all networks."""
    return 2.0 * images - 1.0


def from_model_range(images: np.ndarray) -> np.ndarray:
    return np.clip((images + 1.0) / 2.0, 0.0, 1.0)


def canonical_order(samples: list[Sample]) -> list[int]:
    """Indices that sort samples by (domain_id, identity_id, path)."""
    return sorted(range(len(samples)),
                  key=lambda i: (samples[i].domain_id, samples[i].identity_id,
                                 samples[i].path))


def stack_canonical(samples: list[Sample]) -> tuple[np.ndarray, list[Sample]]:
    """Stack images into one (B, H, W, 3) array in canonical sample order."""
    order = canonical_order(samples)
    ordered = [samples[i] for i in order]
    return np.stack([s.image for s in ordered]), ordered


def fit_classifier(model: Sequential, images: np.ndarray, labels: np.ndarray,
                   config: TrainConfig) -> dict[str, list[float]]:
    """Minimize multi-class cross-entropy with momentum SGD.

    ``images`` are [0, 1] pixels; conversion to model range happens here.
    The learning rate drops by 10x after two thirds of the epochs. Returns
    per-epoch mean loss and training accuracy. Raises on non-finite loss.
    """
    if images.shape[0] != labels.shape[0]:
        raise ValidationError(
            f"{images.shape[0]} images vs {labels.shape[0]} labels")
    x_all = to_model_range(images)
    opt = SGD(model.params(), lr=config.learning_rate, momentum=0.9,
              weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    n = x_all.shape[0]
    decay_at = int(np.ceil(config.epochs * 2 / 3))
    history: dict[str, list[float]] = {"loss": [], "accuracy": []}

    for epoch in range(config.epochs):
        opt.lr = config.learning_rate * (0.1 if epoch >= decay_at else 1.0)
        perm = rng.permutation(n)
        losses = []
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            logits, caches = model.forward(x_all[idx])
            loss, dlogits = cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            _, grads = model.backward(caches, dlogits)
            opt.step(grads)
            losses.append(loss)
            correct += int((logits.argmax(axis=1) == labels[idx]).sum())
        history["loss"].append(float(np.mean(losses)))
        history["accuracy"].append(correct / n)
    return history


def classify(model: Sequential, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Per-image argmax predictions, batched to bound peak memory."""
    preds = []
    x_all = to_model_range(images)
    for start in range(0, x_all.shape[0], batch_size):
        logits, _ = model.forward(x_all[start:start + batch_size])
        preds.append(logits.argmax(axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)
