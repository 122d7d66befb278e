"""Re-identification backbone: joint training, embeddings, fine-tuning.

The feature extractor is a small conv stack with global pooling and a
linear embedding layer; identity classification during training adds a
linear head on top of the embedding. Retrieval uses the embedding only.

Normalization inside the stack is per-sample (instance norm), so inference
on one image is independent of whatever else shares its batch; that is
what makes the determinism and checkpoint round-trip contracts exact.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ValidationError
from .synth import DatasetManifest
from .training import TrainConfig, fit_classifier, stack_canonical, to_model_range

CHECKPOINT_VERSION = 1
DEFAULT_EMBEDDING_DIM = 64


def _conv_stack(rng: np.random.Generator) -> nn.Sequential:
    return nn.Sequential([
        ("conv1", nn.Conv2d(3, 16, kernel=3, stride=2, rng=rng)),
        ("norm1", nn.InstanceNorm(16)),
        ("act1", nn.ReLU()),
        ("conv2", nn.Conv2d(16, 32, kernel=3, stride=2, rng=rng)),
        ("norm2", nn.InstanceNorm(32)),
        ("act2", nn.ReLU()),
        ("conv3", nn.Conv2d(32, 64, kernel=3, stride=2, rng=rng)),
        ("norm3", nn.InstanceNorm(64)),
        ("act3", nn.ReLU()),
        ("pool", nn.GlobalAvgPool()),
    ])


@dataclass(eq=False)
class FeatureExtractor:
    """Conv stack + linear embedding + identity classifier head."""

    height: int
    width: int
    embedding_dim: int
    num_classes: int
    conv_stack: nn.Sequential
    embedding_layer: nn.Dense
    classifier_head: nn.Dense
    label_mapping: dict[int, int]
    version: int = CHECKPOINT_VERSION
    history: dict = field(default_factory=dict)

    @classmethod
    def build(cls, num_classes: int, label_mapping: dict[int, int],
              height: int = 64, width: int = 32,
              embedding_dim: int = DEFAULT_EMBEDDING_DIM,
              seed: int = 0) -> "FeatureExtractor":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5e1d]))
        return cls(
            height=height, width=width,
            embedding_dim=embedding_dim, num_classes=num_classes,
            conv_stack=_conv_stack(rng),
            embedding_layer=nn.Dense(64, embedding_dim, rng=rng),
            classifier_head=nn.Dense(embedding_dim, num_classes, rng=rng),
            label_mapping=dict(label_mapping),
        )

    def _trainable(self) -> nn.Sequential:
        return nn.Sequential([
            ("stack", self.conv_stack),
            ("embed", self.embedding_layer),
            ("head", self.classifier_head),
        ])

    def embed_batch(self, images: np.ndarray) -> np.ndarray:
        """Embeddings for a stacked (B, H, W, 3) [0, 1] image array."""
        if images.ndim != 4 or images.shape[1:] != (self.height, self.width, 3):
            raise ValidationError(
                f"expected (B, {self.height}, {self.width}, 3) images, "
                f"got {images.shape}")
        pooled, _ = self.conv_stack.forward(to_model_range(images))
        embedded, _ = self.embedding_layer.forward(pooled)
        return embedded

    def params(self) -> dict[str, np.ndarray]:
        return self._trainable().params()


def _gather_labels(manifests: list[DatasetManifest]) -> dict[int, int]:
    """Contiguous class index per global identity id, smallest id first.

    The same identity id appearing in several manifests is the same person
    (one class); distinct people must already carry distinct ids.
    """
    ids = sorted({s.identity_id for m in manifests for s in m.samples})
    return {identity: index for index, identity in enumerate(ids)}


def _check_geometry(manifests: list[DatasetManifest]) -> tuple[int, int]:
    sizes = {(m.height, m.width) for m in manifests}
    if len(sizes) != 1:
        raise ValidationError(f"manifests disagree on image size: {sorted(sizes)}")
    return sizes.pop()


def train_joint(manifests: list[DatasetManifest], config: TrainConfig,
                embedding_dim: int = DEFAULT_EMBEDDING_DIM) -> FeatureExtractor:
    """Train the extractor as one big identity classifier over all domains.

    All manifests are merged; the label space is the union of identity ids,
    remapped to contiguous classes (the mapping is recorded on the model).
    """
    if not manifests or not any(m.samples for m in manifests):
        raise ValidationError("need at least one non-empty manifest")
    if config.epochs < 1:
        raise ValidationError("train_joint needs epochs >= 1")
    height, width = _check_geometry(manifests)
    mapping = _gather_labels(manifests)
    if len(mapping) < 2:
        raise ValidationError(f"need at least 2 identities, got {len(mapping)}")

    samples = [s for m in manifests for s in m.samples]
    images, ordered = stack_canonical(samples)
    labels = np.array([mapping[s.identity_id] for s in ordered])

    model = FeatureExtractor.build(
        num_classes=len(mapping), label_mapping=mapping,
        height=height, width=width, embedding_dim=embedding_dim,
        seed=config.seed)
    model.history = fit_classifier(model._trainable(), images, labels, config)
    return model


def extract_features(model: FeatureExtractor,
                     images: list[np.ndarray]) -> list[np.ndarray]:
    """Embed a list of [0, 1] images; the classifier head is not applied."""
    if not images:
        return []
    for img in images:
        if img.shape != (model.height, model.width, 3):
            raise ValidationError(
                f"image shape {img.shape} does not match model "
                f"{(model.height, model.width, 3)}")
    out = []
    stacked = np.stack(images)
    for start in range(0, stacked.shape[0], 64):
        out.extend(model.embed_batch(stacked[start:start + 64]))
    return out


def finetune(model: FeatureExtractor, translated: DatasetManifest,
             config: TrainConfig) -> FeatureExtractor:
    """Adapt the extractor to a translated dataset.

    Conv stack and embedding are warm-started (deep copies; the input model
    is never mutated) and keep training. The classifier head is rebuilt for
    the translated label space; identities the source model already knows
    keep their head rows, so continuing on translated versions of familiar
    people starts from a consistent classifier instead of a random one.
    Zero epochs leaves the copied weights untouched.
    """
    if not translated.samples:
        raise ValidationError("translated manifest is empty")
    if (translated.height, translated.width) != (model.height, model.width):
        raise ValidationError(
            f"translated images are {translated.height}x{translated.width}, "
            f"model expects {model.height}x{model.width}")
    mapping = _gather_labels([translated])

    head_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xf17e]))
    head = nn.Dense(model.embedding_dim, len(mapping), rng=head_rng)
    for ident, col in mapping.items():
        src_col = model.label_mapping.get(ident)
        if src_col is not None:
            head.w[:, col] = model.classifier_head.w[:, src_col]
            head.b[col] = model.classifier_head.b[src_col]
    tuned = FeatureExtractor(
        height=model.height, width=model.width,
        embedding_dim=model.embedding_dim, num_classes=len(mapping),
        conv_stack=copy.deepcopy(model.conv_stack),
        embedding_layer=copy.deepcopy(model.embedding_layer),
        classifier_head=head,
        label_mapping=mapping,
    )
    if config.epochs == 0:
        return tuned

    images, ordered = stack_canonical(list(translated.samples))
    labels = np.array([mapping[s.identity_id] for s in ordered])
    tuned.history = fit_classifier(tuned._trainable(), images, labels, config)
    return tuned


def save_checkpoint(model: FeatureExtractor, path) -> None:
    meta = {
        "kind": "reid",
        "version": model.version,
        "height": model.height,
        "width": model.width,
        "embedding_dim": model.embedding_dim,
        "num_classes": model.num_classes,
        "label_mapping": {str(k): v for k, v in model.label_mapping.items()},
    }
    nn.save_params(path, model.params(), meta)


def load_checkpoint(path) -> FeatureExtractor:
    params, meta = nn.load_params(path)
    if meta.get("kind") != "reid":
        raise ValidationError(f"checkpoint at {path} is not a re-id model")
    model = FeatureExtractor.build(
        num_classes=meta["num_classes"],
        label_mapping={int(k): v for k, v in meta["label_mapping"].items()},
        height=meta["height"], width=meta["width"],
        embedding_dim=meta["embedding_dim"])
    model.version = meta["version"]
    nn.set_params(model._trainable(), params)
    return model
