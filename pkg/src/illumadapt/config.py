"""Experiment configuration: one flat, JSON-round-trippable document.

Every knob the end-to-end run reads lives here, with defaults that fit the
desk-scale benchmark. Validation echoes the complete document back (missing
keys filled with defaults) so persisted configs are always self-contained,
and unknown keys fail with a nearest-match suggestion.
"""

from __future__ import annotations

import dataclasses
import difflib
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

SCHEMA_VERSION = 1

_METRICS = ("cosine", "euclidean")
_ABLATIONS = ("none", "id", "ref", "mask_full")
_GAN_MODES = ("log", "lsgan")


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0

    # data scale
    height: int = 64
    width: int = 32
    num_identities: int = 20
    num_real_identities: int = 20
    num_target_identities: int = 20
    num_illuminations: int = 12
    samples_per_identity: int = 4
    target_samples_per_identity: int = 5
    eval_samples_per_identity: int = 2

    # what separates rendered "real" cameras from clean synthetic frames
    gap_noise_sigma: float = 0.02
    gap_texture: bool = True
    gap_blur: bool = True
    # the target cameras are a different device: somewhat noisier, different
    # background look, and a per-seed tone response the source never applies.
    # tone is the log2 spread of the per-channel response exponent
    target_gap_noise_sigma: float = 0.03
    target_gap_texture_strength: float = 0.4
    target_gap_tone: float = 0.5

    # models
    embedding_dim: int = 64
    metric: str = "cosine"
    ablation: str = "mask_full"
    gan_mode: str = "log"
    lambda_cycle: float = 10.0
    lambda_identity: float = 10.0
    lambda_mask: float = 5.0
    ngf: int = 8
    ndf: int = 8

    # stage optimizers
    reid_learning_rate: float = 0.02
    reid_epochs: int = 20
    reid_batch_size: int = 16
    illum_learning_rate: float = 0.02
    illum_epochs: int = 12
    illum_batch_size: int = 16
    gan_learning_rate: float = 5e-4
    gan_epochs: int = 25
    gan_batch_size: int = 4
    finetune_learning_rate: float = 0.01
    finetune_epochs: int = 10
    finetune_batch_size: int = 16

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(
                f"config schema_version {self.schema_version} not supported "
                f"(this build reads version {SCHEMA_VERSION})")
        positive = ("height", "width", "num_identities", "num_real_identities",
                    "num_target_identities", "num_illuminations",
                    "samples_per_identity", "target_samples_per_identity",
                    "eval_samples_per_identity", "embedding_dim", "ngf", "ndf",
                    "reid_epochs", "reid_batch_size", "illum_epochs",
                    "illum_batch_size", "gan_epochs", "gan_batch_size",
                    "finetune_batch_size")
        for name in positive:
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.finetune_epochs < 0:
            raise ValidationError(
                f"finetune_epochs must be >= 0, got {self.finetune_epochs}")
        for name in ("reid_learning_rate", "illum_learning_rate",
                     "gan_learning_rate", "finetune_learning_rate"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("lambda_cycle", "lambda_identity", "lambda_mask"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("gap_noise_sigma", "target_gap_noise_sigma",
                     "target_gap_texture_strength", "target_gap_tone"):
            if getattr(self, name) < 0:
                raise ValidationError(
                    f"{name} must be >= 0, got {getattr(self, name)}")
        if self.num_illuminations < 2:
            raise ValidationError(
                f"num_illuminations must be >= 2, got {self.num_illuminations}")
        if self.metric not in _METRICS:
            raise ValidationError(f"metric must be one of {_METRICS}, got {self.metric!r}")
        if self.ablation not in _ABLATIONS:
            raise ValidationError(
                f"ablation must be one of {_ABLATIONS}, got {self.ablation!r}")
        if self.gan_mode not in _GAN_MODES:
            raise ValidationError(
                f"gan_mode must be one of {_GAN_MODES}, got {self.gan_mode!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_INT_FIELDS = {n for n, f in _FIELDS.items() if f.type == "int"}
_FLOAT_FIELDS = {n for n, f in _FIELDS.items() if f.type == "float"}
_BOOL_FIELDS = {n for n, f in _FIELDS.items() if f.type == "bool"}


def validate_config(doc: dict) -> ExperimentConfig:
    """Check a raw config document and return the full typed config.

    Unknown keys are rejected with a closest-known-key suggestion; type
    errors name the field. Missing keys take their defaults, so
    ``validate_config(doc).to_dict()`` always yields the complete document.
    """
    if not isinstance(doc, dict):
        raise ValidationError(f"config must be a JSON object, got {type(doc).__name__}")
    cleaned = {}
    for key, value in doc.items():
        if key not in _FIELDS:
            near = difflib.get_close_matches(key, _FIELDS, n=1)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            raise ValidationError(f"unknown config key {key!r}{hint}")
        if key in _BOOL_FIELDS:
            if not isinstance(value, bool):
                raise ValidationError(f"{key} must be a boolean, got {value!r}")
        elif key in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(f"{key} must be an integer, got {value!r}")
        elif key in _FLOAT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"{key} must be a number, got {value!r}")
            value = float(value)
        elif not isinstance(value, str):
            raise ValidationError(f"{key} must be a string, got {value!r}")
        cleaned[key] = value
    return ExperimentConfig(**cleaned)


def load_config(path: Path | str) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ValidationError(f"config file {p} is not valid JSON: {err}") from None
    return validate_config(doc)


def save_config(cfg: ExperimentConfig, path: Path | str) -> None:
    p = Path(path)
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    tmp.replace(p)


def _canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def stage_hash(stage: str, fields: dict, parents: dict[str, str]) -> str:
    """Content hash for one pipeline stage.

    Mixes the stage's own effective settings with the hashes of the stages
    it consumes, so any upstream change invalidates everything downstream.
    """
    doc = {"stage": stage, "fields": fields, "parents": dict(sorted(parents.items()))}
    return hashlib.sha256(_canonical(doc).encode()).hexdigest()
