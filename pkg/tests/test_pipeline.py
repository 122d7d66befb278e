"""Config document validation, stage hashing, run manifests, resumable
pipeline semantics, and the command line wrapper."""

import dataclasses
import json
import subprocess
import sys

import numpy as np
import pytest

from illumadapt.config import (ExperimentConfig, load_config, save_config,
                               stage_hash, validate_config)
from illumadapt.errors import (StaleCheckpointError, ValidationError)
from illumadapt.pipeline import (STAGES, RunManifest, _stage_hashes,
                                 _stages_upto, derived_seed, run_pipeline)
from illumadapt import cli

quiet_degenerate = pytest.mark.filterwarnings(
    "ignore::illumadapt.errors.DegenerateDomainsWarning")


def tiny_config(**overrides):
    """Smallest config the renderer and generator geometry allow; runs the
    whole pipeline in well under a second."""
    base = dict(seed=0, height=16, width=16, num_identities=3,
                num_real_identities=3, num_target_identities=3,
                num_illuminations=2, samples_per_identity=2,
                target_samples_per_identity=2, eval_samples_per_identity=2,
                embedding_dim=16, ngf=4, ndf=4, reid_epochs=2, illum_epochs=2,
                gan_epochs=1, finetune_epochs=1)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigValidation:
    def test_empty_document_yields_defaults(self):
        assert validate_config({}) == ExperimentConfig()

    def test_echoed_document_is_complete(self):
        doc = validate_config({"seed": 3}).to_dict()
        assert doc["seed"] == 3
        assert set(doc) == {f.name for f in
                            dataclasses.fields(ExperimentConfig)}

    def test_unknown_key_suggests_nearest(self):
        with pytest.raises(ValidationError,
                           match="did you mean 'reid_epochs'"):
            validate_config({"reid_epoch": 5})

    def test_unknown_key_without_neighbor(self):
        with pytest.raises(ValidationError, match="unknown config key"):
            validate_config({"zzzzqqq": 5})

    def test_int_field_rejects_string(self):
        with pytest.raises(ValidationError, match="seed must be an integer"):
            validate_config({"seed": "7"})

    def test_int_field_rejects_bool(self):
        with pytest.raises(ValidationError, match="height must be an integer"):
            validate_config({"height": True})

    def test_bool_field_rejects_int(self):
        with pytest.raises(ValidationError, match="gap_blur must be a boolean"):
            validate_config({"gap_blur": 1})

    def test_float_field_accepts_int(self):
        cfg = validate_config({"lambda_cycle": 3})
        assert cfg.lambda_cycle == 3.0
        assert isinstance(cfg.lambda_cycle, float)

    def test_string_field_rejects_number(self):
        with pytest.raises(ValidationError, match="metric must be a string"):
            validate_config({"metric": 2})

    def test_not_a_mapping(self):
        with pytest.raises(ValidationError, match="JSON object"):
            validate_config([1, 2])

    @pytest.mark.parametrize("field,value,match", [
        ("metric", "manhattan", "metric must be one of"),
        ("ablation", "all", "ablation must be one of"),
        ("gan_mode", "wgan", "gan_mode must be one of"),
        ("num_illuminations", 1, "num_illuminations must be >= 2"),
        ("finetune_epochs", -1, "finetune_epochs must be >= 0"),
        ("reid_learning_rate", 0.0, "reid_learning_rate must be > 0"),
        ("lambda_mask", -1.0, "lambda_mask must be >= 0"),
        ("height", 0, "height must be >= 1"),
        ("schema_version", 99, "schema_version 99 not supported"),
    ])
    def test_semantic_rejections(self, field, value, match):
        with pytest.raises(ValidationError, match=match):
            ExperimentConfig(**{field: value})

    def test_file_round_trip(self, tmp_path):
        cfg = tiny_config(seed=11)
        save_config(cfg, tmp_path / "config.json")
        assert load_config(tmp_path / "config.json") == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_malformed_json(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ValidationError, match="not valid JSON"):
            load_config(tmp_path / "bad.json")


class TestStageHash:
    def test_deterministic(self):
        a = stage_hash("s", {"x": 1}, {"p": "abc"})
        b = stage_hash("s", {"x": 1}, {"p": "abc"})
        assert a == b and len(a) == 64

    def test_sensitive_to_every_part(self):
        base = stage_hash("s", {"x": 1}, {"p": "abc"})
        assert stage_hash("t", {"x": 1}, {"p": "abc"}) != base
        assert stage_hash("s", {"x": 2}, {"p": "abc"}) != base
        assert stage_hash("s", {"x": 1}, {"p": "abd"}) != base
        assert stage_hash("s", {"x": 1}, {}) != base

    def test_parent_order_irrelevant(self):
        assert stage_hash("s", {}, {"a": "1", "b": "2"}) == \
            stage_hash("s", {}, {"b": "2", "a": "1"})

    def test_seed_change_invalidates_everything(self):
        h0 = _stage_hashes(tiny_config(seed=0))
        h1 = _stage_hashes(tiny_config(seed=1))
        assert all(h0[s] != h1[s] for s in STAGES)

    def test_finetune_change_invalidates_only_descendants(self):
        h0 = _stage_hashes(tiny_config())
        h1 = _stage_hashes(tiny_config(finetune_epochs=2))
        assert {s for s in STAGES if h0[s] != h1[s]} == \
            {"finetune", "evaluate"}

    def test_metric_change_invalidates_only_evaluate(self):
        h0 = _stage_hashes(tiny_config())
        h1 = _stage_hashes(tiny_config(metric="euclidean"))
        assert {s for s in STAGES if h0[s] != h1[s]} == {"evaluate"}

    def test_classifier_change_flows_through_selection(self):
        h0 = _stage_hashes(tiny_config())
        h1 = _stage_hashes(tiny_config(illum_epochs=3))
        assert {s for s in STAGES if h0[s] != h1[s]} == \
            {"train-illum", "infer-illum", "train-translate", "translate",
             "finetune", "evaluate"}


class TestStagesUpto:
    def test_none_means_all(self):
        assert _stages_upto(None) == STAGES

    def test_closure_keeps_pipeline_order(self):
        assert _stages_upto("train-illum") == ("gen-data", "train-illum")
        assert _stages_upto("gen-target") == ("gen-data", "gen-target")
        assert _stages_upto("evaluate") == STAGES

    def test_unknown_stage(self):
        with pytest.raises(ValidationError, match="unknown stage"):
            _stages_upto("deploy")


class TestRunManifest:
    def sample(self):
        return RunManifest(config={"seed": 0},
                           stages={"gen-data": {"hash": "h", "artifacts": [],
                                                "metrics": {"a": 1}}})

    def test_dict_round_trip(self):
        m = self.sample()
        assert RunManifest.from_dict(m.to_dict()) == m

    def test_file_round_trip(self, tmp_path):
        m = self.sample()
        m.save(tmp_path / "run_manifest.json")
        assert RunManifest.load(tmp_path / "run_manifest.json") == m

    def test_missing_field_rejected(self):
        with pytest.raises(ValidationError, match="missing field 'stages'"):
            RunManifest.from_dict({"schema_version": 1, "config": {}})

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="no run manifest"):
            RunManifest.load(tmp_path / "run_manifest.json")

    def test_metrics_merge_in_stage_order(self):
        m = RunManifest(config={}, stages={
            "evaluate": {"hash": "h", "artifacts": [],
                         "metrics": {"rank1": 0.9, "k_star": 7}},
            "infer-illum": {"hash": "h", "artifacts": [],
                            "metrics": {"k_star": 1}},
        })
        # evaluate comes later in the pipeline, so its value wins
        assert m.metrics == {"k_star": 7, "rank1": 0.9}

    def test_missing_artifacts_checks_files_and_dataset_dirs(self, tmp_path):
        m = RunManifest(config={}, stages={
            "s": {"hash": "h",
                  "artifacts": ["checkpoints/model.npz", "data/set"],
                  "metrics": {}}})
        assert m.missing_artifacts(tmp_path, "s") == \
            ["checkpoints/model.npz", "data/set"]
        (tmp_path / "checkpoints").mkdir()
        (tmp_path / "checkpoints/model.npz").write_bytes(b"x")
        (tmp_path / "data/set").mkdir(parents=True)
        # a dataset directory without its manifest is still missing
        assert m.missing_artifacts(tmp_path, "s") == ["data/set"]
        (tmp_path / "data/set/manifest.json").write_text("{}")
        assert m.missing_artifacts(tmp_path, "s") == []
        assert m.missing_artifacts(tmp_path, "unknown-stage") == []


@quiet_degenerate
class TestRunPipeline:
    def test_full_run_persists_every_stage(self, tmp_path):
        manifest = run_pipeline(tiny_config(), tmp_path)
        assert set(manifest.stages) == set(STAGES)
        metrics = manifest.metrics
        for key in ("rank1", "baseline_rank1", "cmc", "k_star",
                    "nearest_catalog_index", "reid_final_accuracy",
                    "stats_distance_translated_target",
                    "stats_distance_synthetic_target",
                    "foreground_color_shift"):
            assert key in metrics, key
        for rel in ("run_manifest.json", "config.json",
                    "checkpoints/reid_joint.npz", "checkpoints/illum.npz",
                    "checkpoints/translation.npz",
                    "checkpoints/reid_finetuned.npz",
                    "artifacts/selection.json", "artifacts/metrics.json",
                    "data/real_source/manifest.json",
                    "data/translated/manifest.json",
                    "data/target_probe/manifest.json"):
            assert (tmp_path / rel).exists(), rel

    def test_second_run_skips_every_stage(self, tmp_path):
        cfg = tiny_config()
        run_pipeline(cfg, tmp_path)
        lines = []
        manifest = run_pipeline(cfg, tmp_path, echo=lines.append)
        assert lines == [f"[{s}] up to date" for s in STAGES]
        assert set(manifest.stages) == set(STAGES)

    def test_stale_stage_refuses_without_force(self, tmp_path):
        run_pipeline(tiny_config(), tmp_path)
        with pytest.raises(StaleCheckpointError,
                           match="'finetune'.*--force") as err:
            run_pipeline(tiny_config(finetune_epochs=2), tmp_path)
        assert "--force" in str(err.value)

    def test_force_rebuilds_only_the_stale_suffix(self, tmp_path):
        run_pipeline(tiny_config(), tmp_path)
        lines = []
        run_pipeline(tiny_config(finetune_epochs=2), tmp_path, force=True,
                     echo=lines.append)
        assert lines == [f"[{s}] up to date" for s in STAGES[:-2]] + \
            ["[finetune] running", "[evaluate] running"]

    def test_deleted_artifact_triggers_rerun(self, tmp_path):
        cfg = tiny_config()
        run_pipeline(cfg, tmp_path)
        (tmp_path / "checkpoints/reid_finetuned.npz").unlink()
        lines = []
        run_pipeline(cfg, tmp_path, echo=lines.append)
        assert "[finetune] running" in lines
        # config unchanged, so stages with intact artifacts stay skipped
        assert "[evaluate] up to date" in lines

    def test_upto_builds_the_ancestor_closure_only(self, tmp_path):
        manifest = run_pipeline(tiny_config(), tmp_path, upto="train-illum")
        assert set(manifest.stages) == {"gen-data", "train-illum"}
        assert not (tmp_path / "checkpoints/reid_joint.npz").exists()

    def test_partial_run_resumes_into_full_run(self, tmp_path):
        cfg = tiny_config()
        run_pipeline(cfg, tmp_path, upto="train-reid")
        lines = []
        manifest = run_pipeline(cfg, tmp_path, echo=lines.append)
        assert "[gen-data] up to date" in lines
        assert "[train-reid] up to date" in lines
        assert "[evaluate] running" in lines
        assert set(manifest.stages) == set(STAGES)

    def test_identical_runs_are_bit_identical(self, tmp_path):
        cfg = tiny_config()
        run_pipeline(cfg, tmp_path / "a")
        run_pipeline(cfg, tmp_path / "b")
        for rel in ("run_manifest.json", "checkpoints/reid_finetuned.npz",
                    "artifacts/metrics.json",
                    "data/translated/manifest.json"):
            assert (tmp_path / "a" / rel).read_bytes() == \
                (tmp_path / "b" / rel).read_bytes(), rel
        first_png = sorted((tmp_path / "a" / "data/translated").glob("*.png"))
        assert first_png
        for png in first_png:
            twin = tmp_path / "b" / "data/translated" / png.name
            assert png.read_bytes() == twin.read_bytes()


def write_tiny_config(tmp_path, **overrides):
    path = tmp_path / "config.json"
    save_config(tiny_config(**overrides), path)
    return path


@quiet_degenerate
class TestCli:
    def test_run_then_resume(self, tmp_path, capsys):
        cfg = write_tiny_config(tmp_path)
        out = tmp_path / "run"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        first = capsys.readouterr().out
        assert "[evaluate] running" in first
        assert "rank-1" in first

        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        second = capsys.readouterr().out
        assert "[evaluate] up to date" in second

    def test_stale_run_exits_4_then_force_recovers(self, tmp_path, capsys):
        cfg = write_tiny_config(tmp_path)
        out = tmp_path / "run"
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        cfg2 = tmp_path / "config2.json"
        save_config(tiny_config(finetune_epochs=2), cfg2)
        assert cli.main(["run", "--config", str(cfg2),
                         "--out", str(out)]) == 4
        assert "--force" in capsys.readouterr().err
        assert cli.main(["run", "--config", str(cfg2), "--out", str(out),
                         "--force"]) == 0

    def test_invalid_config_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "config.json"
        bad.write_text(json.dumps({"reid_epoch": 5}))
        assert cli.main(["run", "--config", str(bad),
                         "--out", str(tmp_path / "run")]) == 2
        assert "did you mean 'reid_epochs'" in capsys.readouterr().err

    def test_missing_out_exits_2(self, tmp_path, capsys):
        cfg = write_tiny_config(tmp_path)
        assert cli.main(["run", "--config", str(cfg)]) == 2
        assert "--out" in capsys.readouterr().err

    def test_stage_subcommand_builds_prefix(self, tmp_path):
        cfg = write_tiny_config(tmp_path)
        out = tmp_path / "run"
        assert cli.main(["gen-target", "--config", str(cfg),
                         "--out", str(out)]) == 0
        manifest = RunManifest.load(out / "run_manifest.json")
        assert set(manifest.stages) == {"gen-data", "gen-target"}

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = write_tiny_config(tmp_path)
        out = tmp_path / "run"
        assert cli.main(["gen-data", "--config", str(cfg), "--seed", "5",
                         "--out", str(out)]) == 0
        assert json.loads((out / "config.json").read_text())["seed"] == 5

    def test_stats_compares_two_datasets(self, tmp_path, capsys):
        cfg = write_tiny_config(tmp_path)
        out = tmp_path / "run"
        assert cli.main(["gen-target", "--config", str(cfg),
                         "--out", str(out)]) == 0
        capsys.readouterr()  # drop the stage echo lines
        probe = out / "data/target_probe"
        gallery = out / "data/target_gallery"
        assert cli.main(["stats", str(probe), str(gallery)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["distance"] >= 0.0
        assert cli.main(["stats", str(probe), str(probe)]) == 0
        assert json.loads(capsys.readouterr().out)["distance"] == 0.0

    def test_ablation_rejects_bad_seed_list(self, capsys):
        assert cli.main(["ablation", "--seeds", "a,b"]) == 2
        assert "--seeds must be integers" in capsys.readouterr().err

    def test_module_entry_point_prints_usage(self):
        proc = subprocess.run(
            [sys.executable, "-m", "illumadapt.cli", "--help"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "usage: illumadapt" in proc.stdout
        for command in ("gen-data", "run", "stats", "ablation"):
            assert command in proc.stdout


class TestDerivedSeed:
    def test_distinct_salts_distinct_streams(self):
        seeds = {derived_seed(0, salt) for salt in range(50)}
        assert len(seeds) == 50

    def test_deterministic(self):
        assert derived_seed(3, 7) == derived_seed(3, 7)
