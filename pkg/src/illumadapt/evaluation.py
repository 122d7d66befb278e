"""Retrieval evaluation and image-statistics analysis.

Covers the probe/gallery protocol (single-shot: one probe and one gallery
image per identity), CMC curves, histogram statistics with a symmetrized
chi-squared distance, and the ablation battery that compares pipeline
variants across seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .synth import DatasetManifest
from .translation import SoftMatte

METRICS = ("cosine", "euclidean")
HIST_BINS = 64


@dataclass(frozen=True)
class ProbeGallerySplit:
    """Single-shot retrieval instance: feature/label pairs per side."""

    probe: list[tuple[np.ndarray, int]]
    gallery: list[tuple[np.ndarray, int]]
    seed: int

    def __post_init__(self):
        gallery_ids = [ident for _, ident in self.gallery]
        if len(set(gallery_ids)) != len(gallery_ids):
            raise ValidationError("gallery identities must be unique")
        gallery_set = set(gallery_ids)
        missing = sorted({ident for _, ident in self.probe} - gallery_set)
        if missing:
            raise ValidationError(f"probe identities missing from gallery: {missing}")


@dataclass(frozen=True)
class CMCCurve:
    """Cumulative match accuracies; entry r is the top-(r+1) hit rate."""

    accuracies: np.ndarray
    n_probes: int

    @property
    def rank1(self) -> float:
        return float(self.accuracies[0])


@dataclass(frozen=True)
class ImageStats:
    """Normalized per-channel intensity histograms plus one histogram of
    forward-difference gradient magnitudes."""

    intensity_histogram: np.ndarray  # (3, HIST_BINS)
    gradient_magnitude_histogram: np.ndarray  # (HIST_BINS,)


def make_split(manifest: DatasetManifest, target_camera_manifest: DatasetManifest,
               extractor, seed: int) -> ProbeGallerySplit:
    """Build a single-shot probe/gallery split across two cameras.

    Probes come from ``manifest``, gallery entries from
    ``target_camera_manifest``; for every shared identity one image per
    side is drawn by the seeded generator and embedded with ``extractor``
    (any object with an ``embed_batch`` method).
    """
    probe_ids = manifest.identity_ids
    gallery_ids = target_camera_manifest.identity_ids
    odd = sorted(probe_ids ^ gallery_ids)
    if odd:
        raise ValidationError(
            f"identities present in only one camera manifest: {odd}")

    rng = np.random.default_rng(seed)

    def pick_one_per_identity(m: DatasetManifest) -> list:
        by_id: dict[int, list] = {}
        for s in m.samples:
            by_id.setdefault(s.identity_id, []).append(s)
        chosen = []
        for ident in sorted(by_id):
            group = sorted(by_id[ident], key=lambda s: s.path)
            chosen.append(group[int(rng.integers(len(group)))])
        return chosen

    probe_samples = pick_one_per_identity(manifest)
    gallery_samples = pick_one_per_identity(target_camera_manifest)
    probe_feats = extractor.embed_batch(np.stack([s.image for s in probe_samples]))
    gallery_feats = extractor.embed_batch(np.stack([s.image for s in gallery_samples]))
    return ProbeGallerySplit(
        probe=[(f, s.identity_id) for f, s in zip(probe_feats, probe_samples)],
        gallery=[(f, s.identity_id) for f, s in zip(gallery_feats, gallery_samples)],
        seed=seed,
    )


def cmc(split: ProbeGallerySplit, metric: str = "cosine") -> CMCCurve:
    """Rank the gallery for every probe and accumulate match ranks.

    Similarity ties are broken by gallery index (stable sort), so the curve
    is deterministic for any input.
    """
    if metric not in METRICS:
        raise ValidationError(f"metric must be one of {METRICS}, got {metric!r}")
    if not split.probe or not split.gallery:
        raise ValidationError("split has an empty side")
    dims = {f.shape for f, _ in split.probe} | {f.shape for f, _ in split.gallery}
    if len(dims) != 1:
        raise ValidationError(f"feature dimensions disagree: {sorted(dims)}")

    probe_mat = np.stack([f for f, _ in split.probe])
    gallery_mat = np.stack([f for f, _ in split.gallery])
    if metric == "cosine":
        a = probe_mat / np.maximum(np.linalg.norm(probe_mat, axis=1, keepdims=True), 1e-12)
        b = gallery_mat / np.maximum(np.linalg.norm(gallery_mat, axis=1, keepdims=True), 1e-12)
        sims = a @ b.T
    else:
        d2 = ((probe_mat[:, None, :] - gallery_mat[None, :, :]) ** 2).sum(axis=2)
        sims = -d2

    gallery_ids = np.array([ident for _, ident in split.gallery])
    n_gallery = len(gallery_ids)
    hits = np.zeros(n_gallery)
    for row, (_, ident) in zip(sims, split.probe):
        order = np.argsort(-row, kind="stable")
        rank = int(np.nonzero(gallery_ids[order] == ident)[0][0])
        hits[rank] += 1
    accuracies = np.cumsum(hits) / len(split.probe)
    return CMCCurve(accuracies=accuracies, n_probes=len(split.probe))


def image_stats(manifest: DatasetManifest) -> ImageStats:
    """Histogram the dataset: pixel intensities per channel in [0, 1] and
    forward-difference gradient magnitudes in [0, sqrt(2)]."""
    if not manifest.samples:
        raise ValidationError("manifest is empty")
    intensity = np.zeros((3, HIST_BINS))
    gradient = np.zeros(HIST_BINS)
    for s in manifest.samples:
        for c in range(3):
            h, _ = np.histogram(s.image[:, :, c], bins=HIST_BINS, range=(0.0, 1.0))
            intensity[c] += h
        gray = s.image.mean(axis=2)
        gx = gray[:, 1:] - gray[:, :-1]
        gy = gray[1:, :] - gray[:-1, :]
        mag = np.sqrt(gx[:-1, :] ** 2 + gy[:, :-1] ** 2)
        h, _ = np.histogram(mag, bins=HIST_BINS, range=(0.0, np.sqrt(2.0)))
        gradient += h
    return ImageStats(
        intensity_histogram=intensity / intensity.sum(axis=1, keepdims=True),
        gradient_magnitude_histogram=gradient / gradient.sum(),
    )


def _chi_squared(p: np.ndarray, q: np.ndarray) -> float:
    denom = p + q
    mask = denom > 0
    return 0.5 * float((((p - q) ** 2)[mask] / denom[mask]).sum())


def stats_distance(a: ImageStats, b: ImageStats) -> float:
    """Symmetrized chi-squared distance summed over all four histograms."""
    total = sum(_chi_squared(a.intensity_histogram[c], b.intensity_histogram[c])
                for c in range(3))
    total += _chi_squared(a.gradient_magnitude_histogram,
                          b.gradient_magnitude_histogram)
    return float(total)


def foreground_color_shift(source: DatasetManifest, translated: DatasetManifest,
                           matte: SoftMatte) -> np.ndarray:
    """Mean absolute per-channel change inside the matte core (> 0.5).

    Measures how much a translation moved the person region's colors;
    sample lists must correspond pairwise.
    """
    if len(source.samples) != len(translated.samples):
        raise ValidationError(
            f"{len(source.samples)} source vs {len(translated.samples)} "
            f"translated samples")
    region = matte.m > 0.5
    shifts = []
    for s, t in zip(source.samples, translated.samples):
        shifts.append(t.image[region].mean(axis=0) - s.image[region].mean(axis=0))
    return np.abs(np.mean(shifts, axis=0))


# ---------------------------------------------------------------------------
# Ablation battery

CONDITIONS = ("R", "R+S", "CycleGan", "CycleGan+L_id", "CycleGan+L_Ref", "Ours")
SELECTION_MODES = ("inferred", "random")


@dataclass(frozen=True)
class AblationConfig:
    """What to run: pipeline scale, the condition list, and the seeds."""

    identities: int = 20
    illuminations: int = 12
    samples_per_identity: int = 4
    conditions: tuple[str, ...] = CONDITIONS
    selection_modes: tuple[str, ...] = ("inferred",)
    seeds: tuple[int, ...] = (0, 1, 2)
    random_draws: int = 3
    height: int = 64
    width: int = 32
    reid_epochs: int = 20
    illum_epochs: int = 12
    gan_epochs: int = 25
    finetune_epochs: int = 10

    def __post_init__(self):
        unknown = set(self.conditions) - set(CONDITIONS)
        if unknown:
            raise ValidationError(f"unknown conditions: {sorted(unknown)}")
        unknown = set(self.selection_modes) - set(SELECTION_MODES)
        if unknown:
            raise ValidationError(f"unknown selection modes: {sorted(unknown)}")
        if not self.seeds:
            raise ValidationError("need at least one seed")


def run_ablation(config: AblationConfig) -> dict:
    """Run every configured condition for every seed and tabulate rank-1.

    The report carries one record per (condition, seed) cell — plus one per
    random draw when the ``random`` selection mode is enabled — and
    per-condition means. Heavy artifacts (joint model, classifier) are
    shared across conditions within a seed.
    """
    from . import pipeline  # deferred: pipeline imports this module's metrics

    records = []
    for seed in config.seeds:
        bench = pipeline.build_benchmark(config, seed)
        for condition in config.conditions:
            result = pipeline.run_condition(bench, condition)
            records.append({
                "condition": condition, "seed": seed,
                "selection": "inferred" if condition == "Ours" else None,
                "rank1": result["rank1"], "cmc": result["cmc"],
            })
        if "random" in config.selection_modes:
            draw_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xab1a]))
            for draw in range(config.random_draws):
                k = int(draw_rng.integers(config.illuminations))
                result = pipeline.run_condition(bench, "Ours",
                                                forced_domain_index=k)
                records.append({
                    "condition": "Ours", "seed": seed,
                    "selection": f"random[{draw}]", "rank1": result["rank1"],
                    "cmc": result["cmc"],
                })

    means = {}
    for condition in config.conditions:
        vals = [r["rank1"] for r in records
                if r["condition"] == condition
                and (r["selection"] in (None, "inferred"))]
        means[condition] = float(np.mean(vals))
    random_vals = [r["rank1"] for r in records
                   if r["selection"] and r["selection"].startswith("random")]
    if random_vals:
        means["Ours/random-mean"] = float(np.mean(random_vals))
        means["Ours/random-min"] = float(np.min(random_vals))

    return {
        "config": {k: list(v) if isinstance(v, tuple) else v
                   for k, v in vars(config).items()},
        "records": records,
        "means": means,
    }
