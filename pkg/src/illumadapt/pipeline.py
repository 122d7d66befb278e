"""End-to-end orchestration.

Two layers share the same stage logic. The in-memory layer
(:func:`build_benchmark` / :func:`run_condition`) backs the ablation
battery: it renders a benchmark once per seed and reuses the heavy
artifacts across conditions. The on-disk layer (:func:`run_pipeline`)
drives the command line: every stage persists its outputs under the run
directory, records a content hash in the run manifest, and is skipped on
re-entry while its hash still matches. A stage whose recorded hash
disagrees with the current configuration refuses to proceed unless the
caller forces a rebuild.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import illum as illum_mod
from . import reid as reid_mod
from . import translation as trans_mod
from .config import ExperimentConfig, SCHEMA_VERSION, save_config, stage_hash
from .errors import StaleCheckpointError, ValidationError
from .evaluation import (AblationConfig, cmc, foreground_color_shift,
                         image_stats, make_split, stats_distance)
from .synth import (DatasetManifest, RealnessGap, generate_domain,
                    generate_target_domain, load_manifest,
                    nearest_illumination, perturb_illumination,
                    sample_identities, sample_illuminations, save_manifest)
from .training import TrainConfig
from .translation import make_soft_matte

STAGES = ("gen-data", "gen-target", "train-reid", "train-illum", "infer-illum",
          "train-translate", "translate", "finetune", "evaluate")

_PARENTS = {
    "gen-data": (),
    "gen-target": ("gen-data",),
    "train-reid": ("gen-data",),
    "train-illum": ("gen-data",),
    "infer-illum": ("train-illum", "gen-target"),
    "train-translate": ("gen-data", "gen-target", "infer-illum"),
    "translate": ("train-translate", "gen-data"),
    "finetune": ("train-reid", "translate"),
    "evaluate": ("finetune", "train-reid", "gen-target"),
}

_STAGE_FIELDS = {
    "gen-data": ("seed", "height", "width", "num_identities",
                 "num_real_identities", "num_illuminations",
                 "samples_per_identity", "gap_noise_sigma", "gap_texture",
                 "gap_blur"),
    "gen-target": ("num_target_identities", "target_samples_per_identity",
                   "eval_samples_per_identity", "target_gap_noise_sigma",
                   "target_gap_texture_strength", "target_gap_tone"),
    "train-reid": ("embedding_dim", "reid_learning_rate", "reid_epochs",
                   "reid_batch_size"),
    "train-illum": ("illum_learning_rate", "illum_epochs", "illum_batch_size"),
    "infer-illum": (),
    "train-translate": ("ablation", "gan_mode", "lambda_cycle",
                        "lambda_identity", "lambda_mask", "ngf", "ndf",
                        "gan_learning_rate", "gan_epochs", "gan_batch_size"),
    "translate": (),
    "finetune": ("finetune_learning_rate", "finetune_epochs",
                 "finetune_batch_size"),
    "evaluate": ("metric",),
}

# rng stream salts, one per independent draw
_S_SYNTH_IDS = 1
_S_REAL_IDS = 2
_S_TARGET_IDS = 3
_S_CATALOG = 4
_S_SOURCE_ILLUM = 5
_S_TARGET_PICK = 6
_S_PERTURB = 7
_S_RENDER_REAL = 8
_S_RENDER_TARGET = 9
_S_RENDER_PROBE = 10
_S_RENDER_GALLERY = 11
_S_SPLIT = 12
_S_TARGET_CAMERA = 13
_S_REID = 21
_S_ILLUM = 22
_S_REID_REAL_ONLY = 23
_S_GAN = 24
_S_FINETUNE = 25
_S_RENDER_SYNTH = 100  # + catalog index


def derived_seed(seed: int, salt: int) -> int:
    """Independent child seed for one of the pipeline's rng streams."""
    return int(np.random.SeedSequence([seed, salt]).generate_state(1)[0])


def _offset(count: int) -> int:
    # id blocks in steps of 100 keep the ranges disjoint and readable
    return 100 * (1 + (count - 1) // 100)


# ---------------------------------------------------------------------------
# data generation, shared by both layers

@dataclass
class SourceData:
    catalog: list
    source_illumination: object
    synthetic_identities: list
    real_identities: list
    real: DatasetManifest
    synthetic: list[DatasetManifest]


@dataclass
class TargetData:
    target_identities: list
    target_illumination: object
    true_index: int
    train: DatasetManifest
    probe: DatasetManifest
    gallery: DatasetManifest


def _gap(cfg: ExperimentConfig) -> RealnessGap:
    return RealnessGap(noise_sigma=cfg.gap_noise_sigma, texture=cfg.gap_texture,
                       blur=cfg.gap_blur)


def _target_gap(cfg: ExperimentConfig) -> RealnessGap:
    """The target cameras are a different device from the labeled source
    camera: their own noise level and background look, plus a tone response
    drawn once per seed and shared by every target draw."""
    tone_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, _S_TARGET_CAMERA]))
    gamma = 2.0 ** tone_rng.uniform(-cfg.target_gap_tone, cfg.target_gap_tone,
                                    size=3)
    return RealnessGap(noise_sigma=cfg.target_gap_noise_sigma,
                       texture=cfg.gap_texture, blur=cfg.gap_blur,
                       texture_strength=cfg.target_gap_texture_strength,
                       channel_gamma=tuple(float(g) for g in gamma))


def build_source_data(cfg: ExperimentConfig) -> SourceData:
    """Render the labeled side: one "real" source camera plus the full
    synthetic illumination sweep over a shared cast of virtual people."""
    seed = cfg.seed
    catalog = sample_illuminations(cfg.num_illuminations,
                                   derived_seed(seed, _S_CATALOG))
    synth_ids = sample_identities(cfg.num_identities,
                                  derived_seed(seed, _S_SYNTH_IDS))
    real_start = _offset(cfg.num_identities)
    real_ids = sample_identities(cfg.num_real_identities,
                                 derived_seed(seed, _S_REAL_IDS),
                                 start_id=real_start)
    source_dom = _offset(cfg.num_illuminations)
    source_illum = sample_illuminations(
        1, derived_seed(seed, _S_SOURCE_ILLUM), start_id=source_dom)[0]

    real = generate_target_domain(
        real_ids, source_illum, cfg.samples_per_identity, _gap(cfg),
        derived_seed(seed, _S_RENDER_REAL), height=cfg.height, width=cfg.width,
        name="real_source")
    synthetic = [
        generate_domain(synth_ids, entry, cfg.samples_per_identity,
                        derived_seed(seed, _S_RENDER_SYNTH + k),
                        height=cfg.height, width=cfg.width,
                        name=f"synth_{k:02d}")
        for k, entry in enumerate(catalog)
    ]
    return SourceData(catalog=catalog, source_illumination=source_illum,
                      synthetic_identities=synth_ids, real_identities=real_ids,
                      real=real, synthetic=synthetic)


def build_target_data(cfg: ExperimentConfig, catalog: list) -> TargetData:
    """Render the unlabeled target camera: new people under one held-out
    illumination perturbed off a secret catalog entry, with the realness
    gap applied. Three draws: an adaptation pool and two evaluation
    cameras."""
    seed = cfg.seed
    target_start = _offset(cfg.num_identities) + _offset(cfg.num_real_identities)
    target_ids = sample_identities(cfg.num_target_identities,
                                   derived_seed(seed, _S_TARGET_IDS),
                                   start_id=target_start)
    pick_rng = np.random.default_rng(
        np.random.SeedSequence([seed, _S_TARGET_PICK]))
    base = catalog[int(pick_rng.integers(len(catalog)))]
    target_dom = 2 * _offset(cfg.num_illuminations)
    target_illum = perturb_illumination(base, target_dom,
                                        derived_seed(seed, _S_PERTURB))

    gap = _target_gap(cfg)
    train = generate_target_domain(
        target_ids, target_illum, cfg.target_samples_per_identity, gap,
        derived_seed(seed, _S_RENDER_TARGET), catalog=catalog,
        height=cfg.height, width=cfg.width, name="target_train")
    probe = generate_target_domain(
        target_ids, target_illum, cfg.eval_samples_per_identity, gap,
        derived_seed(seed, _S_RENDER_PROBE), catalog=catalog,
        height=cfg.height, width=cfg.width, name="target_probe")
    gallery = generate_target_domain(
        target_ids, target_illum, cfg.eval_samples_per_identity, gap,
        derived_seed(seed, _S_RENDER_GALLERY), catalog=catalog,
        height=cfg.height, width=cfg.width, name="target_gallery")
    return TargetData(target_identities=target_ids,
                      target_illumination=target_illum,
                      true_index=nearest_illumination(target_illum, catalog),
                      train=train, probe=probe, gallery=gallery)


def _reid_tc(cfg: ExperimentConfig, salt: int = _S_REID) -> TrainConfig:
    return TrainConfig(cfg.reid_learning_rate, cfg.reid_epochs,
                       cfg.reid_batch_size, derived_seed(cfg.seed, salt))


def _illum_tc(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(cfg.illum_learning_rate, cfg.illum_epochs,
                       cfg.illum_batch_size, derived_seed(cfg.seed, _S_ILLUM))


def _gan_tc(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(cfg.gan_learning_rate, cfg.gan_epochs,
                       cfg.gan_batch_size, derived_seed(cfg.seed, _S_GAN))


def _finetune_tc(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(cfg.finetune_learning_rate, cfg.finetune_epochs,
                       cfg.finetune_batch_size, derived_seed(cfg.seed, _S_FINETUNE))


def _lambdas(cfg: ExperimentConfig) -> tuple[float, float, float]:
    return (cfg.lambda_cycle, cfg.lambda_identity, cfg.lambda_mask)


# ---------------------------------------------------------------------------
# in-memory benchmark for the ablation battery

@dataclass
class Benchmark:
    """One seed's shared artifacts: data, joint model, domain selection."""

    cfg: ExperimentConfig
    source: SourceData
    target: TargetData
    joint: object
    classifier: object
    selection: object
    cache: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.cfg.seed


_CONDITION_ABLATION = {
    "CycleGan": "none",
    "CycleGan+L_id": "id",
    "CycleGan+L_Ref": "ref",
    "Ours": "mask_full",
}


def _experiment_config_for(config, seed: int) -> ExperimentConfig:
    if isinstance(config, ExperimentConfig):
        return dataclasses.replace(config, seed=seed)
    if isinstance(config, AblationConfig):
        return ExperimentConfig(
            seed=seed, height=config.height, width=config.width,
            num_identities=config.identities,
            num_real_identities=config.identities,
            num_target_identities=config.identities,
            num_illuminations=config.illuminations,
            samples_per_identity=config.samples_per_identity,
            reid_epochs=config.reid_epochs, illum_epochs=config.illum_epochs,
            gan_epochs=config.gan_epochs,
            finetune_epochs=config.finetune_epochs)
    raise ValidationError(f"unsupported config type {type(config).__name__}")


def build_benchmark(config, seed: int) -> Benchmark:
    """Render one seed's benchmark and train the condition-independent
    models (joint extractor, illumination classifier, domain vote)."""
    cfg = _experiment_config_for(config, seed)
    source = build_source_data(cfg)
    target = build_target_data(cfg, source.catalog)
    joint = reid_mod.train_joint([source.real] + source.synthetic, _reid_tc(cfg),
                                 embedding_dim=cfg.embedding_dim)
    classifier = illum_mod.train_illum_classifier(source.synthetic, _illum_tc(cfg))
    selection = illum_mod.infer_domain(classifier, target.train.images())
    return Benchmark(cfg=cfg, source=source, target=target, joint=joint,
                     classifier=classifier, selection=selection)


def evaluate_model(bench: Benchmark, model) -> dict:
    """Single-shot retrieval of the benchmark's target cameras."""
    split = make_split(bench.target.probe, bench.target.gallery, model,
                       derived_seed(bench.cfg.seed, _S_SPLIT))
    curve = cmc(split, metric=bench.cfg.metric)
    return {"rank1": curve.rank1, "cmc": curve.accuracies.tolist()}


def run_condition(bench: Benchmark, condition: str,
                  forced_domain_index: int | None = None) -> dict:
    """Evaluate one ablation condition on a prepared benchmark.

    ``forced_domain_index`` overrides the inferred synthetic domain for the
    translation-based conditions (that is the random-selection arm).
    Results are cached on the benchmark, keyed by condition and domain.
    """
    cfg = bench.cfg
    if condition == "R":
        key = ("R",)
        if key not in bench.cache:
            model = reid_mod.train_joint([bench.source.real],
                                         _reid_tc(cfg, _S_REID_REAL_ONLY),
                                         embedding_dim=cfg.embedding_dim)
            bench.cache[key] = evaluate_model(bench, model)
        return bench.cache[key]
    if condition == "R+S":
        key = ("R+S",)
        if key not in bench.cache:
            bench.cache[key] = evaluate_model(bench, bench.joint)
        return bench.cache[key]
    if condition not in _CONDITION_ABLATION:
        raise ValidationError(f"unknown condition {condition!r}")

    ablation = _CONDITION_ABLATION[condition]
    k = bench.selection.k_star if forced_domain_index is None else forced_domain_index
    if not 0 <= k < len(bench.source.synthetic):
        raise ValidationError(
            f"domain index {k} out of range for "
            f"{len(bench.source.synthetic)} synthetic domains")
    key = (ablation, k)
    if key not in bench.cache:
        source = bench.source.synthetic[k]
        model_t = trans_mod.train_translation(
            source, bench.target.train,
            lambdas=_lambdas(cfg), config=_gan_tc(cfg), ablation=ablation,
            gan_mode=cfg.gan_mode, ngf=cfg.ngf, ndf=cfg.ndf)
        translated = trans_mod.translate(model_t, source)
        tuned = reid_mod.finetune(bench.joint, translated, _finetune_tc(cfg))
        result = evaluate_model(bench, tuned)
        result["domain_index"] = k
        target_key = ("target_stats",)
        if target_key not in bench.cache:
            bench.cache[target_key] = image_stats(bench.target.train)
        target_stats = bench.cache[target_key]
        matte = make_soft_matte(cfg.height, cfg.width)
        result["foreground_color_shift"] = \
            foreground_color_shift(source, translated, matte).tolist()
        result["stats_distance_translated_target"] = \
            stats_distance(image_stats(translated), target_stats)
        result["stats_distance_synthetic_target"] = \
            stats_distance(image_stats(source), target_stats)
        bench.cache[key] = result
    return bench.cache[key]


# ---------------------------------------------------------------------------
# on-disk runs

@dataclass
class RunManifest:
    """Everything a finished (or partial) run claims about itself."""

    config: dict
    stages: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def metrics(self) -> dict:
        merged = {}
        for name in STAGES:
            merged.update(self.stages.get(name, {}).get("metrics", {}))
        return merged

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "config": self.config,
                "stages": self.stages}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunManifest":
        for key in ("schema_version", "config", "stages"):
            if key not in doc:
                raise ValidationError(f"run manifest missing field {key!r}")
        return cls(config=doc["config"], stages=doc["stages"],
                   schema_version=doc["schema_version"])

    def save(self, path: Path | str) -> None:
        p = Path(path)
        tmp = p.with_name(p.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        tmp.replace(p)

    @classmethod
    def load(cls, path: Path | str) -> "RunManifest":
        p = Path(path)
        if not p.exists():
            raise ValidationError(f"no run manifest at {p}")
        return cls.from_dict(json.loads(p.read_text()))

    def missing_artifacts(self, root: Path, stage: str) -> list[str]:
        out = []
        for rel in self.stages.get(stage, {}).get("artifacts", []):
            p = root / rel
            if not (p.exists() if p.suffix else (p / "manifest.json").exists()):
                out.append(rel)
        return out


def _stage_hashes(cfg: ExperimentConfig) -> dict[str, str]:
    doc = cfg.to_dict()
    hashes: dict[str, str] = {}
    for stage in STAGES:
        fields = {name: doc[name] for name in _STAGE_FIELDS[stage]}
        hashes[stage] = stage_hash(
            stage, fields, {p: hashes[p] for p in _PARENTS[stage]})
    return hashes


class _RunContext:
    """Scratch state for one run: lazily loaded artifacts, shared paths."""

    def __init__(self, cfg: ExperimentConfig, root: Path):
        self.cfg = cfg
        self.root = root
        self._manifests: dict[str, DatasetManifest] = {}

    def manifest(self, rel: str) -> DatasetManifest:
        if rel not in self._manifests:
            self._manifests[rel] = load_manifest(self.root / rel)
        return self._manifests[rel]

    def put_manifest(self, rel: str, m: DatasetManifest) -> None:
        save_manifest(m, self.root / rel)
        self._manifests[rel] = m

    def selection(self) -> dict:
        return json.loads((self.root / "artifacts/selection.json").read_text())


def _stage_gen_data(ctx: _RunContext):
    cfg = ctx.cfg
    data = build_source_data(cfg)
    artifacts = ["data/specs.json", "data/real_source"]
    ctx.put_manifest("data/real_source", data.real)
    for k, m in enumerate(data.synthetic):
        rel = f"data/synth_{k:02d}"
        ctx.put_manifest(rel, m)
        artifacts.append(rel)
    specs = {
        "catalog": [e.to_dict() for e in data.catalog],
        "source_illumination": data.source_illumination.to_dict(),
        "synthetic_identities": [i.to_dict() for i in data.synthetic_identities],
        "real_identities": [i.to_dict() for i in data.real_identities],
    }
    path = ctx.root / "data/specs.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(specs, indent=2) + "\n")
    return artifacts, {}


def _load_catalog(ctx: _RunContext):
    from .synth import IlluminationSpec
    doc = json.loads((ctx.root / "data/specs.json").read_text())
    return [IlluminationSpec.from_dict(d) for d in doc["catalog"]]


def _stage_gen_target(ctx: _RunContext):
    cfg = ctx.cfg
    data = build_target_data(cfg, _load_catalog(ctx))
    for rel, m in (("data/target_train", data.train),
                   ("data/target_probe", data.probe),
                   ("data/target_gallery", data.gallery)):
        ctx.put_manifest(rel, m)
    specs = {
        "target_illumination": data.target_illumination.to_dict(),
        "nearest_catalog_index": data.true_index,
        "target_identities": [i.to_dict() for i in data.target_identities],
    }
    (ctx.root / "data/target_specs.json").write_text(
        json.dumps(specs, indent=2) + "\n")
    return (["data/target_specs.json", "data/target_train", "data/target_probe",
             "data/target_gallery"],
            {"nearest_catalog_index": data.true_index})


def _synth_rels(cfg: ExperimentConfig) -> list[str]:
    return [f"data/synth_{k:02d}" for k in range(cfg.num_illuminations)]


def _stage_train_reid(ctx: _RunContext):
    cfg = ctx.cfg
    manifests = [ctx.manifest("data/real_source")]
    manifests += [ctx.manifest(rel) for rel in _synth_rels(cfg)]
    model = reid_mod.train_joint(manifests, _reid_tc(cfg),
                                 embedding_dim=cfg.embedding_dim)
    out = ctx.root / "checkpoints/reid_joint.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    reid_mod.save_checkpoint(model, out)
    return (["checkpoints/reid_joint.npz"],
            {"reid_final_accuracy": model.history["accuracy"][-1]})


def _stage_train_illum(ctx: _RunContext):
    cfg = ctx.cfg
    manifests = [ctx.manifest(rel) for rel in _synth_rels(cfg)]
    model = illum_mod.train_illum_classifier(manifests, _illum_tc(cfg))
    out = ctx.root / "checkpoints/illum.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    illum_mod.save_checkpoint(model, out)
    return (["checkpoints/illum.npz"],
            {"illum_held_out_accuracy": model.held_out_accuracy})


def _stage_infer_illum(ctx: _RunContext):
    classifier = illum_mod.load_checkpoint(ctx.root / "checkpoints/illum.npz")
    target = ctx.manifest("data/target_train")
    selection = illum_mod.infer_domain(classifier, target.images())
    doc = {
        "k_star": selection.k_star,
        "domain_id": classifier.domain_ids[selection.k_star],
        "vote_counts": [int(v) for v in selection.vote_counts],
        "n_images": selection.n_images,
    }
    out = ctx.root / "artifacts/selection.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2) + "\n")
    return (["artifacts/selection.json"],
            {"k_star": selection.k_star,
             "vote_counts": doc["vote_counts"]})


def _stage_train_translate(ctx: _RunContext):
    cfg = ctx.cfg
    k = ctx.selection()["k_star"]
    model = trans_mod.train_translation(
        ctx.manifest(f"data/synth_{k:02d}"), ctx.manifest("data/target_train"),
        lambdas=_lambdas(cfg), config=_gan_tc(cfg), ablation=cfg.ablation,
        gan_mode=cfg.gan_mode, ngf=cfg.ngf, ndf=cfg.ndf)
    out = ctx.root / "checkpoints/translation.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    trans_mod.save_checkpoint(model, out)
    history = {name: values[-1] for name, values in model.history.items()}
    return ["checkpoints/translation.npz"], {"translation_final_losses": history}


def _stage_translate(ctx: _RunContext):
    k = ctx.selection()["k_star"]
    model = trans_mod.load_checkpoint(ctx.root / "checkpoints/translation.npz")
    translated = trans_mod.translate(model, ctx.manifest(f"data/synth_{k:02d}"))
    ctx.put_manifest("data/translated", translated)
    return ["data/translated"], {}


def _stage_finetune(ctx: _RunContext):
    cfg = ctx.cfg
    joint = reid_mod.load_checkpoint(ctx.root / "checkpoints/reid_joint.npz")
    tuned = reid_mod.finetune(joint, ctx.manifest("data/translated"),
                              _finetune_tc(cfg))
    out = ctx.root / "checkpoints/reid_finetuned.npz"
    reid_mod.save_checkpoint(tuned, out)
    metrics = {}
    if tuned.history:
        metrics["finetune_final_accuracy"] = tuned.history["accuracy"][-1]
    return ["checkpoints/reid_finetuned.npz"], metrics


def _stage_evaluate(ctx: _RunContext):
    cfg = ctx.cfg
    tuned = reid_mod.load_checkpoint(ctx.root / "checkpoints/reid_finetuned.npz")
    joint = reid_mod.load_checkpoint(ctx.root / "checkpoints/reid_joint.npz")
    probe = ctx.manifest("data/target_probe")
    gallery = ctx.manifest("data/target_gallery")
    split_seed = derived_seed(cfg.seed, _S_SPLIT)

    curve = cmc(make_split(probe, gallery, tuned, split_seed), metric=cfg.metric)
    baseline = cmc(make_split(probe, gallery, joint, split_seed),
                   metric=cfg.metric)

    k = ctx.selection()["k_star"]
    source = ctx.manifest(f"data/synth_{k:02d}")
    translated = ctx.manifest("data/translated")
    target_train = ctx.manifest("data/target_train")
    target_stats = image_stats(target_train)
    matte = make_soft_matte(cfg.height, cfg.width)
    metrics = {
        "rank1": curve.rank1,
        "cmc": curve.accuracies.tolist(),
        "baseline_rank1": baseline.rank1,
        "baseline_cmc": baseline.accuracies.tolist(),
        "stats_distance_translated_target":
            stats_distance(image_stats(translated), target_stats),
        "stats_distance_synthetic_target":
            stats_distance(image_stats(source), target_stats),
        "foreground_color_shift":
            foreground_color_shift(source, translated, matte).tolist(),
    }
    out = ctx.root / "artifacts/metrics.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + ".tmp")
    tmp.write_text(json.dumps(metrics, indent=2) + "\n")
    tmp.replace(out)
    return ["artifacts/metrics.json"], metrics


_STAGE_IMPL = {
    "gen-data": _stage_gen_data,
    "gen-target": _stage_gen_target,
    "train-reid": _stage_train_reid,
    "train-illum": _stage_train_illum,
    "infer-illum": _stage_infer_illum,
    "train-translate": _stage_train_translate,
    "translate": _stage_translate,
    "finetune": _stage_finetune,
    "evaluate": _stage_evaluate,
}


def _stages_upto(upto: str | None) -> tuple[str, ...]:
    if upto is None:
        return STAGES
    if upto not in STAGES:
        raise ValidationError(f"unknown stage {upto!r}; stages are {STAGES}")
    needed: set[str] = set()

    def add(stage: str) -> None:
        if stage not in needed:
            needed.add(stage)
            for parent in _PARENTS[stage]:
                add(parent)

    add(upto)
    return tuple(s for s in STAGES if s in needed)


def run_pipeline(cfg: ExperimentConfig, out_dir: Path | str,
                 force: bool = False, upto: str | None = None,
                 echo=None) -> RunManifest:
    """Run the pipeline into ``out_dir``, resuming whatever already matches.

    A stage reruns only when it has no matching record; a record whose hash
    disagrees with the current config raises ``StaleCheckpointError`` unless
    ``force`` is set, in which case the stage and everything after it are
    rebuilt. ``upto`` stops after the named stage (ancestors included).
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    say = echo or (lambda *_: None)

    manifest_path = root / "run_manifest.json"
    if manifest_path.exists():
        manifest = RunManifest.load(manifest_path)
    else:
        manifest = RunManifest(config=cfg.to_dict())
    manifest.config = cfg.to_dict()
    save_config(cfg, root / "config.json")

    hashes = _stage_hashes(cfg)
    ctx = _RunContext(cfg, root)
    for stage in _stages_upto(upto):
        expected = hashes[stage]
        record = manifest.stages.get(stage)
        if record is not None and record["hash"] == expected and \
                not manifest.missing_artifacts(root, stage):
            say(f"[{stage}] up to date")
            continue
        if record is not None and record["hash"] != expected and not force:
            raise StaleCheckpointError(
                f"stage {stage!r} in {root} was built with a different "
                f"configuration; pass --force to rebuild it")
        say(f"[{stage}] running")
        artifacts, metrics = _STAGE_IMPL[stage](ctx)
        manifest.stages[stage] = {
            "hash": expected,
            "artifacts": artifacts,
            "metrics": metrics,
        }
        manifest.save(manifest_path)
    return manifest
