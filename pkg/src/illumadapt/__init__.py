"""Toy-scale unsupervised domain adaptation for person re-identification
under illumination shift.

The package renders its own benchmark (virtual people under a catalog of
illuminations plus a held-out "real" target camera), infers which catalog
entry the target is closest to by counting classifier votes, trains a
regularized cycle-consistent translator from that synthetic domain to the
target, and fine-tunes a feature extractor on the translated images.
"""

from .config import ExperimentConfig, load_config, save_config, validate_config
from .errors import (
    DegenerateDomainsWarning,
    IllumAdaptError,
    NumericalError,
    StaleCheckpointError,
    TrainingDivergedError,
    ValidationError,
)
from .evaluation import (
    AblationConfig,
    CMCCurve,
    ImageStats,
    ProbeGallerySplit,
    cmc,
    foreground_color_shift,
    image_stats,
    make_split,
    run_ablation,
    stats_distance,
)
from .illum import (
    DomainSelection,
    IlluminationClassifier,
    infer_domain,
    train_illum_classifier,
)
from .pipeline import (
    Benchmark,
    RunManifest,
    build_benchmark,
    run_condition,
    run_pipeline,
)
from .reid import (
    FeatureExtractor,
    extract_features,
    finetune,
    train_joint,
)
from .synth import (
    DatasetManifest,
    IdentitySpec,
    IlluminationSpec,
    RealnessGap,
    Sample,
    apply_illumination,
    generate_domain,
    generate_target_domain,
    load_manifest,
    manifest_equal,
    nearest_illumination,
    perturb_illumination,
    render_person,
    sample_identities,
    sample_illuminations,
    save_manifest,
)
from .training import TrainConfig
from .translation import (
    LossComponents,
    SoftMatte,
    TranslationModel,
    adversarial_loss,
    cycle_loss,
    full_objective,
    identity_mapping_loss,
    make_soft_matte,
    masked_reg_loss,
    ref_loss,
    train_translation,
    translate,
)

__version__ = "0.1.0"

__all__ = [
    "AblationConfig", "Benchmark", "CMCCurve", "DatasetManifest",
    "DegenerateDomainsWarning", "DomainSelection", "ExperimentConfig",
    "FeatureExtractor", "IdentitySpec", "IlluminationClassifier",
    "IlluminationSpec", "IllumAdaptError", "ImageStats", "LossComponents",
    "NumericalError",
    "ProbeGallerySplit", "RealnessGap", "RunManifest", "Sample", "SoftMatte",
    "StaleCheckpointError", "TrainConfig", "TrainingDivergedError",
    "TranslationModel", "ValidationError", "adversarial_loss",
    "apply_illumination", "build_benchmark", "cmc", "cycle_loss",
    "extract_features", "finetune", "foreground_color_shift",
    "full_objective", "generate_domain", "generate_target_domain",
    "identity_mapping_loss", "image_stats", "infer_domain", "load_config",
    "load_manifest", "make_soft_matte", "make_split", "manifest_equal",
    "masked_reg_loss", "nearest_illumination", "perturb_illumination",
    "ref_loss", "render_person", "run_ablation", "run_condition",
    "run_pipeline", "sample_identities", "sample_illuminations",
    "save_config", "save_manifest", "stats_distance", "train_illum_classifier",
    "train_joint", "train_translation", "translate", "validate_config",
]
