"""Illumination-domain classification and target-domain selection.

A small conv net learns to name the illumination condition an image was
rendered under. Pointing it at an unlabeled target domain and counting the
per-image votes selects the synthetic domain whose lighting is closest to
the target's; the most-voted class wins, ties going to the smallest index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import DegenerateDomainsWarning, ValidationError
from .synth import DatasetManifest
from .training import (TrainConfig, classify, fit_classifier, stack_canonical,
                       to_model_range)

CHECKPOINT_VERSION = 1

# Fraction of each domain's images reserved for the held-out accuracy report.
HOLDOUT_FRACTION = 1 / 6


def _classifier_net(num_classes: int, rng: np.random.Generator) -> nn.Sequential:
    return nn.Sequential([
        ("conv1", nn.Conv2d(3, 16, kernel=3, stride=2, rng=rng)),
        ("norm1", nn.InstanceNorm(16)),
        ("act1", nn.ReLU()),
        ("conv2", nn.Conv2d(16, 32, kernel=3, stride=2, rng=rng)),
        ("norm2", nn.InstanceNorm(32)),
        ("act2", nn.ReLU()),
        ("pool", nn.GlobalAvgPool()),
        ("head", nn.Dense(32, num_classes, rng=rng)),
    ])


@dataclass(eq=False)
class IlluminationClassifier:
    height: int
    width: int
    num_domains: int
    domain_ids: list[int]  # class index -> original domain id
    net: nn.Sequential
    version: int = CHECKPOINT_VERSION
    held_out_accuracy: float | None = None
    history: dict = field(default_factory=dict)

    @classmethod
    def build(cls, domain_ids: list[int], height: int = 64, width: int = 32,
              seed: int = 0) -> "IlluminationClassifier":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x111d]))
        return cls(height=height, width=width, num_domains=len(domain_ids),
                   domain_ids=list(domain_ids),
                   net=_classifier_net(len(domain_ids), rng))

    def scores(self, images: np.ndarray) -> np.ndarray:
        """Raw class scores, one row per image."""
        if images.ndim != 4 or images.shape[1:] != (self.height, self.width, 3):
            raise ValidationError(
                f"expected (B, {self.height}, {self.width}, 3), got {images.shape}")
        logits, _ = self.net.forward(to_model_range(images))
        return logits


@dataclass(frozen=True)
class DomainSelection:
    """Outcome of voting: winning class plus the full tally."""

    k_star: int
    vote_counts: np.ndarray
    n_images: int

    def __post_init__(self):
        if int(self.vote_counts.sum()) != self.n_images:
            raise ValidationError(
                f"vote counts sum to {int(self.vote_counts.sum())}, "
                f"expected {self.n_images}")
        if self.k_star != int(np.argmax(self.vote_counts)):
            raise ValidationError("k_star is not the argmax of vote_counts")


def train_illum_classifier(synthetic: list[DatasetManifest],
                           config: TrainConfig) -> IlluminationClassifier:
    """Fit the N-way illumination classifier on synthetic domains.

    Each manifest is one domain and must carry exactly one distinct
    domain_id. One sixth of each domain's images (at least one) is held out
    for the reported per-image accuracy; a held-out accuracy at or below
    min(0.6, 2/N) triggers a degenerate-domains warning, since that is the
    regime of indistinguishable lighting classes.
    """
    if len(synthetic) < 2:
        raise ValidationError(f"need at least 2 domains, got {len(synthetic)}")
    if config.epochs < 1:
        raise ValidationError("train_illum_classifier needs epochs >= 1")
    domain_ids = []
    for m in synthetic:
        ids = m.domain_ids
        if len(ids) != 1:
            raise ValidationError(
                f"manifest {m.name!r} spans domain ids {sorted(ids)}; expected one")
        domain_ids.append(ids.pop())
    if len(set(domain_ids)) != len(domain_ids):
        raise ValidationError(f"duplicate domain ids across manifests: {domain_ids}")
    sizes = {(m.height, m.width) for m in synthetic}
    if len(sizes) != 1:
        raise ValidationError(f"manifests disagree on image size: {sorted(sizes)}")

    domain_ids = sorted(domain_ids)
    class_of = {d: i for i, d in enumerate(domain_ids)}
    samples = [s for m in synthetic for s in m.samples]
    images, ordered = stack_canonical(samples)
    labels = np.array([class_of[s.domain_id] for s in ordered])

    # Per-domain tail split keeps both partitions covering every class.
    holdout_mask = np.zeros(len(ordered), dtype=bool)
    for cls in range(len(domain_ids)):
        idx = np.nonzero(labels == cls)[0]
        k = max(1, int(len(idx) * HOLDOUT_FRACTION))
        holdout_mask[idx[-k:]] = True

    model = IlluminationClassifier.build(
        domain_ids, height=synthetic[0].height, width=synthetic[0].width,
        seed=config.seed)
    model.history = fit_classifier(
        model.net, images[~holdout_mask], labels[~holdout_mask], config)

    preds = classify(model.net, images[holdout_mask])
    acc = float((preds == labels[holdout_mask]).mean())
    model.held_out_accuracy = acc
    n = len(domain_ids)
    if acc <= min(0.6, 2.0 / n):
        warnings.warn(
            f"held-out illumination accuracy {acc:.3f} is near chance for "
            f"{n} domains; the domains may be indistinguishable",
            DegenerateDomainsWarning, stacklevel=2)
    return model


def infer_domain(classifier: IlluminationClassifier,
                 target_images: list[np.ndarray]) -> DomainSelection:
    """Count per-image predicted classes and return the most common one.

    Equivalent to taking the mode of the per-image argmax predictions;
    ties break toward the smallest class index.
    """
    if not target_images:
        raise ValidationError("target_images must be non-empty")
    preds = classify(classifier.net, np.stack(target_images))
    votes = np.bincount(preds, minlength=classifier.num_domains)
    return DomainSelection(k_star=int(np.argmax(votes)), vote_counts=votes,
                           n_images=len(target_images))


def save_checkpoint(model: IlluminationClassifier, path) -> None:
    meta = {
        "kind": "illum",
        "version": model.version,
        "height": model.height,
        "width": model.width,
        "domain_ids": model.domain_ids,
        "held_out_accuracy": model.held_out_accuracy,
    }
    nn.save_params(path, model.net.params(), meta)


def load_checkpoint(path) -> IlluminationClassifier:
    params, meta = nn.load_params(path)
    if meta.get("kind") != "illum":
        raise ValidationError(f"checkpoint at {path} is not an illumination classifier")
    model = IlluminationClassifier.build(
        meta["domain_ids"], height=meta["height"], width=meta["width"])
    model.version = meta["version"]
    model.held_out_accuracy = meta["held_out_accuracy"]
    nn.set_params(model.net, params)
    return model
