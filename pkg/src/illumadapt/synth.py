"""Procedural toy person datasets with controllable illumination domains.

An identity is a stylized person sprite (head / torso / legs, each with its
own colour and proportions) drawn centred on a flat background. An
illumination domain is a per-channel affine + gamma transform together with
a background colour; rendering the same identity under two domains produces
photometrically distinct images, which is the only property the downstream
adaptation pipeline relies on.

"Real" target domains are produced by the same renderer plus a reproducible
realness gap: a textured background (seeded value noise), a 3x3 box blur,
and additive Gaussian sensor noise.

All images are H x W x 3 float arrays in [0, 1], quantized to the 8-bit grid
at creation so the on-disk PNG round-trip is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .imgio import load_image, quantize, save_image

ORIGIN_SYNTHETIC = "synthetic"
ORIGIN_REAL = "real"
ORIGINS = (ORIGIN_SYNTHETIC, ORIGIN_REAL)

GAIN_RANGE = (0.2, 1.8)
BIAS_RANGE = (-0.2, 0.2)
GAMMA_RANGE = (0.5, 2.0)

# Minimum pairwise L2 distance between identity colour vectors (9 channels)
# when sampling identities; prevents near-duplicate identities at toy scale.
MIN_IDENTITY_COLOR_DISTANCE = 0.15

DEFAULT_HEIGHT = 64
DEFAULT_WIDTH = 32

# Translated datasets get a fresh domain id derived from the source's.
TRANSLATED_DOMAIN_OFFSET = 10_000


def _check_rgb(name: str, value: Sequence[float], lo: float, hi: float) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in value)
    if len(vals) != 3:
        raise ValidationError(f"{name} must have 3 components, got {len(vals)}")
    for i, v in enumerate(vals):
        if not (lo <= v <= hi) or not math.isfinite(v):
            raise ValidationError(f"{name}[{i}] out of range [{lo}, {hi}]: {v}")
    return vals


@dataclass(frozen=True)
class IdentitySpec:
    """One virtual person: three body-part colours plus body proportions.

    ``body_colors`` holds head, torso and leg RGB triples in [0, 1].
    ``body_geometry`` holds four abstract fractions in (0, 1): torso width,
    torso height, head radius and leg width. The renderer maps them onto
    pixel sizes that keep the sprite inside the frame.
    """

    identity_id: int
    body_colors: tuple[tuple[float, float, float], ...]
    body_geometry: tuple[float, float, float, float]

    def __post_init__(self):
        if int(self.identity_id) < 0:
            raise ValidationError(f"identity_id must be >= 0, got {self.identity_id}")
        colors = tuple(_check_rgb(f"body_colors[{i}]", c, 0.0, 1.0)
                       for i, c in enumerate(self.body_colors))
        if len(colors) != 3:
            raise ValidationError(f"body_colors must have 3 triples, got {len(colors)}")
        geometry = tuple(float(g) for g in self.body_geometry)
        if len(geometry) != 4:
            raise ValidationError(f"body_geometry must have 4 entries, got {len(geometry)}")
        for i, g in enumerate(geometry):
            if not (0.0 < g < 1.0):
                raise ValidationError(f"body_geometry[{i}] must lie in (0, 1), got {g}")
        object.__setattr__(self, "identity_id", int(self.identity_id))
        object.__setattr__(self, "body_colors", colors)
        object.__setattr__(self, "body_geometry", geometry)

    def to_dict(self) -> dict:
        return {
            "identity_id": self.identity_id,
            "body_colors": [list(c) for c in self.body_colors],
            "body_geometry": list(self.body_geometry),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IdentitySpec":
        return cls(
            identity_id=d["identity_id"],
            body_colors=tuple(tuple(c) for c in d["body_colors"]),
            body_geometry=tuple(d["body_geometry"]),
        )


@dataclass(frozen=True)
class IlluminationSpec:
    """A parametric stand-in for one lighting environment.

    Applying the spec to an in-range image gives
    ``clip(gain * image + bias, 0, 1) ** gamma`` per channel, which stays in
    [0, 1] for any valid parameters.
    """

    illum_id: int
    channel_gain: tuple[float, float, float]
    channel_bias: tuple[float, float, float]
    gamma: float
    background_color: tuple[float, float, float]

    def __post_init__(self):
        if int(self.illum_id) < 0:
            raise ValidationError(f"illum_id must be >= 0, got {self.illum_id}")
        gain = _check_rgb("channel_gain", self.channel_gain, *GAIN_RANGE)
        bias = _check_rgb("channel_bias", self.channel_bias, *BIAS_RANGE)
        bg = _check_rgb("background_color", self.background_color, 0.0, 1.0)
        g = float(self.gamma)
        if not (GAMMA_RANGE[0] <= g <= GAMMA_RANGE[1]):
            raise ValidationError(f"gamma out of range {list(GAMMA_RANGE)}: {g}")
        object.__setattr__(self, "illum_id", int(self.illum_id))
        object.__setattr__(self, "channel_gain", gain)
        object.__setattr__(self, "channel_bias", bias)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "background_color", bg)

    def parameter_vector(self) -> np.ndarray:
        """Flat parameter vector used for nearest-catalog-entry lookups."""
        return np.array(
            self.channel_gain + self.channel_bias + (self.gamma,) + self.background_color
        )

    def to_dict(self) -> dict:
        return {
            "illum_id": self.illum_id,
            "channel_gain": list(self.channel_gain),
            "channel_bias": list(self.channel_bias),
            "gamma": self.gamma,
            "background_color": list(self.background_color),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IlluminationSpec":
        return cls(
            illum_id=d["illum_id"],
            channel_gain=tuple(d["channel_gain"]),
            channel_bias=tuple(d["channel_bias"]),
            gamma=d["gamma"],
            background_color=tuple(d["background_color"]),
        )


@dataclass(frozen=True)
class RealnessGap:
    """Reproducible synthetic-to-real appearance gap.

    Components are applied in order: textured background (replaces the flat
    one), 3x3 box blur (once), per-channel tone response, additive Gaussian
    sensor noise. ``channel_gamma`` is the camera's response curve, a power
    law per RGB channel; (1, 1, 1) is the identity. With all components
    disabled the output equals the clean render bit for bit.
    """

    noise_sigma: float = 0.02
    texture: bool = True
    blur: bool = True
    texture_strength: float = 0.25
    texture_cells: int = 4
    channel_gamma: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.texture_strength < 0:
            raise ValidationError(f"texture_strength must be >= 0, got {self.texture_strength}")
        if self.texture_cells < 1:
            raise ValidationError(f"texture_cells must be >= 1, got {self.texture_cells}")
        if len(self.channel_gamma) != 3 or any(g <= 0 for g in self.channel_gamma):
            raise ValidationError(
                f"channel_gamma must be three positive exponents, got {self.channel_gamma}")


@dataclass(eq=False)
class Sample:
    """One labelled image: pixel data plus identity, domain and origin."""

    image: np.ndarray
    identity_id: int
    domain_id: int
    origin: str
    path: str

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValidationError(f"origin must be one of {ORIGINS}, got {self.origin!r}")


@dataclass(eq=False)
class DatasetManifest:
    """An in-memory dataset: named, sized, and carrying its samples.

    ``domain_ids`` and ``identity_ids`` are derived from the samples, which
    keeps the membership invariants true by construction.
    """

    name: str
    height: int
    width: int
    samples: list[Sample] = field(default_factory=list)

    @property
    def domain_ids(self) -> set[int]:
        return {s.domain_id for s in self.samples}

    @property
    def identity_ids(self) -> set[int]:
        return {s.identity_id for s in self.samples}

    def validate(self) -> None:
        for s in self.samples:
            if s.image.shape != (self.height, self.width, 3):
                raise ValidationError(
                    f"sample {s.path!r} has shape {s.image.shape}, "
                    f"expected {(self.height, self.width, 3)}"
                )
            lo, hi = float(s.image.min()), float(s.image.max())
            if lo < 0.0 or hi > 1.0:
                raise ValidationError(f"sample {s.path!r} has pixels outside [0, 1]")

    def images(self) -> list[np.ndarray]:
        return [s.image for s in self.samples]


def manifest_equal(a: DatasetManifest, b: DatasetManifest) -> bool:
    """Structural equality: metadata, per-sample records and pixel data."""
    if (a.name, a.height, a.width, len(a.samples)) != (b.name, b.height, b.width, len(b.samples)):
        return False
    for sa, sb in zip(a.samples, b.samples):
        if (sa.identity_id, sa.domain_id, sa.origin, sa.path) != (
            sb.identity_id, sb.domain_id, sb.origin, sb.path
        ):
            return False
        if not np.array_equal(sa.image, sb.image):
            return False
    return True


def apply_illumination(image: np.ndarray, illum: IlluminationSpec) -> np.ndarray:
    """Per-channel affine + gamma: clip(gain * image + bias, 0, 1) ** gamma."""
    gain = np.asarray(illum.channel_gain)
    bias = np.asarray(illum.channel_bias)
    out = np.clip(gain * image + bias, 0.0, 1.0)
    return out ** illum.gamma


def _sprite_index_map(identity: IdentitySpec, pose_angle: float,
                      jitter: tuple[int, int], height: int, width: int) -> np.ndarray:
    """Paint the body-part index map: 0 background, 1 head, 2 torso, 3 legs.

    ``pose_angle`` leans (shears) the sprite sideways and mirrors it when the
    person faces away; the head sits slightly off-centre so mirroring is
    visible.
    """
    g_tw, g_th, g_hr, g_lw = identity.body_geometry
    idx = np.zeros((height, width), dtype=np.int8)

    top = int(round(0.13 * height)) + jitter[1]
    bottom = int(round(0.87 * height)) + jitter[1]
    person_h = bottom - top
    cx = width / 2.0 + jitter[0]

    head_r = (0.05 + 0.05 * g_hr) * height
    torso_w = (0.26 + 0.30 * g_tw) * width
    torso_h = (0.28 + 0.17 * g_th) * person_h
    leg_w = (0.25 + 0.35 * g_lw) * torso_w

    head_cy = top + head_r
    head_cx = cx + 0.08 * width  # fixed sideways offset; mirroring moves it
    torso_top = top + 2.0 * head_r
    torso_bottom = torso_top + torso_h

    shear = 0.08 * math.sin(pose_angle)
    mirrored = math.cos(pose_angle) < 0.0

    def fill(row: int, c_lo: float, c_hi: float, label: int) -> None:
        if row < 0 or row >= height:
            return
        dx = shear * (row - top)
        lo = max(0, int(math.ceil(c_lo + dx)))
        hi = min(width, int(math.floor(c_hi + dx)) + 1)
        if lo < hi:
            idx[row, lo:hi] = label

    for row in range(int(math.floor(head_cy - head_r)), int(math.ceil(head_cy + head_r)) + 1):
        dy = row - head_cy
        if abs(dy) > head_r:
            continue
        half = math.sqrt(max(head_r ** 2 - dy ** 2, 0.0))
        fill(row, head_cx - half, head_cx + half, 1)

    for row in range(int(round(torso_top)), int(round(torso_bottom))):
        fill(row, cx - torso_w / 2.0, cx + torso_w / 2.0, 2)

    for row in range(int(round(torso_bottom)), bottom):
        fill(row, cx - torso_w / 2.0, cx - torso_w / 2.0 + leg_w, 3)
        fill(row, cx + torso_w / 2.0 - leg_w, cx + torso_w / 2.0, 3)

    if mirrored:
        idx = idx[:, ::-1]
    return idx


def _sample_jitter(rng: np.random.Generator) -> tuple[int, int]:
    return int(rng.integers(-2, 3)), int(rng.integers(-1, 2))


def _compose(identity: IdentitySpec, illum: IlluminationSpec, pose_angle: float,
             jitter: tuple[int, int], height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    idx = _sprite_index_map(identity, pose_angle, jitter, height, width)
    img = np.empty((height, width, 3))
    img[:] = np.asarray(illum.background_color)
    for part in (1, 2, 3):
        img[idx == part] = np.asarray(identity.body_colors[part - 1])
    return img, idx > 0


def _check_render_args(height: int, width: int) -> None:
    if height < 16 or width < 16:
        raise ValidationError(f"height and width must be >= 16, got {height} x {width}")


def render_person(identity: IdentitySpec, illum: IlluminationSpec, pose_angle: float,
                  rng_seed: int, height: int = DEFAULT_HEIGHT,
                  width: int = DEFAULT_WIDTH) -> np.ndarray:
    """Render one person crop under one illumination.

    Deterministic given all inputs; ``rng_seed`` only drives a small
    placement jitter. Under the identity illumination (gain 1, bias 0,
    gamma 1) foreground pixels equal the identity's base colours, up to the
    8-bit quantization grid.
    """
    _check_render_args(height, width)
    rng = np.random.default_rng(rng_seed)
    img, _ = _compose(identity, illum, pose_angle, _sample_jitter(rng), height, width)
    return quantize(apply_illumination(img, illum))


def foreground_mask(identity: IdentitySpec, pose_angle: float, rng_seed: int,
                    height: int = DEFAULT_HEIGHT, width: int = DEFAULT_WIDTH) -> np.ndarray:
    """Boolean sprite mask for the same inputs as :func:`render_person`."""
    _check_render_args(height, width)
    rng = np.random.default_rng(rng_seed)
    jitter = _sample_jitter(rng)
    return _sprite_index_map(identity, pose_angle, jitter, height, width) > 0


def _box_blur_3x3(image: np.ndarray) -> np.ndarray:
    padded = np.pad(image, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(image)
    for dy in range(3):
        for dx in range(3):
            out += padded[dy:dy + image.shape[0], dx:dx + image.shape[1]]
    return out / 9.0


def _value_noise_field(rng: np.random.Generator, height: int, width: int,
                       cells: int) -> np.ndarray:
    """Bilinearly interpolated coarse noise in [-1, 1], one scalar per pixel."""
    gh = cells + 1
    gw = max(2, cells // 2 + 1)
    grid = rng.uniform(-1.0, 1.0, size=(gh, gw))
    ys = np.linspace(0.0, gh - 1.0, height)
    xs = np.linspace(0.0, gw - 1.0, width)
    y0 = np.floor(ys).astype(int).clip(0, gh - 2)
    x0 = np.floor(xs).astype(int).clip(0, gw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = grid[y0][:, x0]
    b = grid[y0][:, x0 + 1]
    c = grid[y0 + 1][:, x0]
    d = grid[y0 + 1][:, x0 + 1]
    return (a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx
            + c * fy * (1 - fx) + d * fy * fx)


def _draw_sample_params(rng: np.random.Generator) -> tuple[float, tuple[int, int]]:
    pose = float(rng.uniform(0.0, 2.0 * math.pi))
    return pose, _sample_jitter(rng)


def generate_domain(identities: Sequence[IdentitySpec], illum: IlluminationSpec,
                    samples_per_identity: int, rng_seed: int,
                    height: int = DEFAULT_HEIGHT, width: int = DEFAULT_WIDTH,
                    name: str | None = None) -> DatasetManifest:
    """Render one synthetic illumination domain.

    Produces ``len(identities) * samples_per_identity`` samples, all tagged
    with the illumination's id as their domain id. Pose angles are drawn
    uniformly from the seeded generator.
    """
    if not identities:
        raise ValidationError("identities must be non-empty")
    if samples_per_identity < 1:
        raise ValidationError(f"samples_per_identity must be >= 1, got {samples_per_identity}")
    _check_render_args(height, width)

    rng = np.random.default_rng(rng_seed)
    manifest = DatasetManifest(
        name=name or f"domain_{illum.illum_id:04d}", height=height, width=width
    )
    for identity in identities:
        for k in range(samples_per_identity):
            pose, jitter = _draw_sample_params(rng)
            img, _ = _compose(identity, illum, pose, jitter, height, width)
            img = quantize(apply_illumination(img, illum))
            manifest.samples.append(Sample(
                image=img,
                identity_id=identity.identity_id,
                domain_id=illum.illum_id,
                origin=ORIGIN_SYNTHETIC,
                path=f"{identity.identity_id:04d}_{k:02d}.png",
            ))
    return manifest


def generate_target_domain(identities: Sequence[IdentitySpec], illum: IlluminationSpec,
                           samples_per_identity: int, gap: RealnessGap, rng_seed: int,
                           catalog: Sequence[IlluminationSpec] = (),
                           height: int = DEFAULT_HEIGHT, width: int = DEFAULT_WIDTH,
                           name: str | None = None) -> DatasetManifest:
    """Render a held-out "real" domain with the configured realness gap.

    ``illum`` must not collide with the training catalog (same id or
    identical parameters); pass the catalog to enforce that. Pose and jitter
    streams match :func:`generate_domain` exactly, so a fully disabled gap
    yields bit-identical images.
    """
    for entry in catalog:
        if entry.illum_id == illum.illum_id or np.array_equal(
            entry.parameter_vector(), illum.parameter_vector()
        ):
            raise ValidationError(
                f"target illumination {illum.illum_id} collides with catalog entry "
                f"{entry.illum_id}; the target domain must be held out"
            )
    if not identities:
        raise ValidationError("identities must be non-empty")
    if samples_per_identity < 1:
        raise ValidationError(f"samples_per_identity must be >= 1, got {samples_per_identity}")
    _check_render_args(height, width)

    rng = np.random.default_rng(rng_seed)
    gap_rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0x67617]))
    manifest = DatasetManifest(
        name=name or f"target_{illum.illum_id:04d}", height=height, width=width
    )
    for identity in identities:
        for k in range(samples_per_identity):
            pose, jitter = _draw_sample_params(rng)
            img, fg = _compose(identity, illum, pose, jitter, height, width)
            if gap.texture:
                bg_field = _value_noise_field(gap_rng, height, width, gap.texture_cells)
                textured = np.clip(img + gap.texture_strength * bg_field[:, :, None], 0.0, 1.0)
                img = np.where(fg[:, :, None], img, textured)
            img = apply_illumination(img, illum)
            if gap.blur:
                img = _box_blur_3x3(img)
            if tuple(gap.channel_gamma) != (1.0, 1.0, 1.0):
                img = np.clip(img, 0.0, 1.0) ** np.asarray(gap.channel_gamma)
            if gap.noise_sigma > 0:
                img = img + gap_rng.normal(0.0, gap.noise_sigma, size=img.shape)
            img = quantize(np.clip(img, 0.0, 1.0))
            manifest.samples.append(Sample(
                image=img,
                identity_id=identity.identity_id,
                domain_id=illum.illum_id,
                origin=ORIGIN_REAL,
                path=f"{identity.identity_id:04d}_{k:02d}.png",
            ))
    return manifest


def sample_identities(count: int, rng_seed: int, start_id: int = 0) -> list[IdentitySpec]:
    """Draw identities whose colour vectors are pairwise at least
    ``MIN_IDENTITY_COLOR_DISTANCE`` apart (rejection sampling)."""
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(rng_seed)
    chosen: list[np.ndarray] = []
    specs: list[IdentitySpec] = []
    attempts = 0
    while len(specs) < count:
        attempts += 1
        if attempts > 10_000 * count:
            raise ValidationError(
                f"could not sample {count} identities with pairwise colour "
                f"distance >= {MIN_IDENTITY_COLOR_DISTANCE}"
            )
        colors = rng.uniform(0.0, 1.0, size=9)
        if any(np.linalg.norm(colors - prev) < MIN_IDENTITY_COLOR_DISTANCE for prev in chosen):
            continue
        geometry = rng.uniform(0.05, 0.95, size=4)
        chosen.append(colors)
        specs.append(IdentitySpec(
            identity_id=start_id + len(specs),
            body_colors=tuple(tuple(colors[3 * i:3 * i + 3]) for i in range(3)),
            body_geometry=tuple(geometry),
        ))
    return specs


def sample_illuminations(count: int, rng_seed: int, start_id: int = 0) -> list[IlluminationSpec]:
    """Draw an illumination catalog uniformly from the valid parameter box."""
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(rng_seed)
    specs = []
    for i in range(count):
        specs.append(IlluminationSpec(
            illum_id=start_id + i,
            channel_gain=tuple(rng.uniform(*GAIN_RANGE, size=3)),
            channel_bias=tuple(rng.uniform(*BIAS_RANGE, size=3)),
            gamma=float(rng.uniform(*GAMMA_RANGE)),
            background_color=tuple(rng.uniform(0.1, 0.9, size=3)),
        ))
    return specs


def perturb_illumination(base: IlluminationSpec, illum_id: int, rng_seed: int,
                         scale: float = 0.08) -> IlluminationSpec:
    """A held-out illumination near ``base``: each parameter moves by a
    uniform fraction of its valid range and is clamped back into range."""
    rng = np.random.default_rng(rng_seed)

    def nudge(value: float, lo: float, hi: float) -> float:
        span = hi - lo
        return float(np.clip(value + rng.uniform(-scale, scale) * span, lo, hi))

    return IlluminationSpec(
        illum_id=illum_id,
        channel_gain=tuple(nudge(v, *GAIN_RANGE) for v in base.channel_gain),
        channel_bias=tuple(nudge(v, *BIAS_RANGE) for v in base.channel_bias),
        gamma=nudge(base.gamma, *GAMMA_RANGE),
        background_color=tuple(nudge(v, 0.0, 1.0) for v in base.background_color),
    )


def nearest_illumination(illum: IlluminationSpec,
                         catalog: Sequence[IlluminationSpec]) -> int:
    """Index of the catalog entry closest to ``illum`` in parameter L2."""
    if not catalog:
        raise ValidationError("catalog must be non-empty")
    target = illum.parameter_vector()
    distances = [float(np.linalg.norm(entry.parameter_vector() - target)) for entry in catalog]
    return int(np.argmin(distances))


def save_manifest(manifest: DatasetManifest, out_dir: Path | str) -> Path:
    """Write the dataset as ``manifest.json`` plus one PNG per sample."""
    manifest.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for s in manifest.samples:
        save_image(out / s.path, s.image)
        records.append({
            "path": s.path,
            "identity_id": s.identity_id,
            "domain_id": s.domain_id,
            "origin": s.origin,
        })
    doc = {
        "name": manifest.name,
        "height": manifest.height,
        "width": manifest.width,
        "samples": records,
    }
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(doc, indent=2))
    tmp.replace(out / "manifest.json")
    return out / "manifest.json"


def load_manifest(directory: Path | str) -> DatasetManifest:
    """Read a dataset directory written by :func:`save_manifest`."""
    root = Path(directory)
    doc_path = root / "manifest.json"
    if not doc_path.exists():
        raise ValidationError(f"no manifest.json in {root}")
    doc = json.loads(doc_path.read_text())
    for key in ("name", "height", "width", "samples"):
        if key not in doc:
            raise ValidationError(f"manifest.json missing field {key!r}")
    manifest = DatasetManifest(name=doc["name"], height=int(doc["height"]),
                               width=int(doc["width"]))
    for rec in doc["samples"]:
        manifest.samples.append(Sample(
            image=load_image(root / rec["path"]),
            identity_id=int(rec["identity_id"]),
            domain_id=int(rec["domain_id"]),
            origin=rec["origin"],
            path=rec["path"],
        ))
    manifest.validate()
    return manifest
