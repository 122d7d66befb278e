"""Feature extractor training, label bookkeeping, fine-tuning, and
checkpoint round trips."""

import numpy as np
import pytest

from illumadapt import synth
from illumadapt.errors import TrainingDivergedError, ValidationError
from illumadapt.reid import (FeatureExtractor, extract_features, finetune,
                             load_checkpoint, save_checkpoint, train_joint)
from illumadapt.training import TrainConfig

SIZE = dict(height=16, width=16)


def two_domain_data(seed=0, n_ids=4, samples=4):
    ids = synth.sample_identities(n_ids, seed)
    illums = synth.sample_illuminations(2, seed + 5)
    return [synth.generate_domain(ids, illum, samples, seed + 20 + i, **SIZE)
            for i, illum in enumerate(illums)]


def quick_config(epochs=8, seed=0, lr=0.02):
    return TrainConfig(learning_rate=lr, epochs=epochs, batch_size=8, seed=seed)


def trained(seed=0, epochs=8):
    return train_joint(two_domain_data(seed), quick_config(epochs, seed))


class TestTrainJoint:
    def test_labels_unioned_across_domains(self):
        model = trained()
        # same four people appear in both domains: one class each
        assert model.num_classes == 4
        assert sorted(model.label_mapping) == [0, 1, 2, 3]
        assert sorted(model.label_mapping.values()) == [0, 1, 2, 3]

    def test_distinct_ids_get_distinct_classes(self):
        ids_a = synth.sample_identities(2, 0)
        ids_b = synth.sample_identities(2, 1, start_id=100)
        illum = synth.sample_illuminations(1, 2)[0]
        m_a = synth.generate_domain(ids_a, illum, 3, 3, **SIZE)
        m_b = synth.generate_domain(ids_b, illum, 3, 4, **SIZE)
        model = train_joint([m_a, m_b], quick_config(epochs=1))
        assert model.num_classes == 4
        assert sorted(model.label_mapping) == [0, 1, 100, 101]

    def test_training_fits_the_data(self):
        model = trained(epochs=20)
        assert model.history["accuracy"][-1] >= 0.9

    def test_embeddings_separate_identities(self):
        data = two_domain_data()
        model = train_joint(data, quick_config())
        feats, labels = [], []
        for m in data:
            for s in m.samples:
                feats.append(s.image)
                labels.append(s.identity_id)
        emb = np.stack(extract_features(model, feats))
        emb = emb / np.linalg.norm(emb, axis=1, keepdims=True)
        labels = np.array(labels)
        sims = emb @ emb.T
        same = labels[:, None] == labels[None, :]
        off_diag = ~np.eye(len(labels), dtype=bool)
        intra = sims[same & off_diag].mean()
        inter = sims[~same].mean()
        assert intra > inter

    def test_deterministic(self):
        a, b = trained(seed=3, epochs=2), trained(seed=3, epochs=2)
        pa, pb = a.params(), b.params()
        assert pa.keys() == pb.keys()
        for name in pa:
            assert np.array_equal(pa[name], pb[name]), name

    def test_embedding_ignores_batch_company(self):
        model = trained(epochs=1)
        imgs = np.stack(two_domain_data()[0].images()[:4])
        alone = model.embed_batch(imgs[:1])
        together = model.embed_batch(imgs)[:1]
        assert np.allclose(alone, together, atol=1e-12)

    def test_rejects_empty_and_tiny_inputs(self):
        with pytest.raises(ValidationError):
            train_joint([], quick_config())
        one_id = synth.generate_domain(synth.sample_identities(1, 0),
                                       synth.sample_illuminations(1, 1)[0],
                                       3, 2, **SIZE)
        with pytest.raises(ValidationError):
            train_joint([one_id], quick_config())

    def test_rejects_geometry_mismatch(self):
        ids = synth.sample_identities(2, 0)
        illum = synth.sample_illuminations(1, 1)[0]
        small = synth.generate_domain(ids, illum, 2, 2, height=16, width=16)
        big = synth.generate_domain(ids, illum, 2, 3, height=32, width=16)
        with pytest.raises(ValidationError):
            train_joint([small, big], quick_config())

    def test_rejects_zero_epochs(self):
        with pytest.raises(ValidationError):
            train_joint(two_domain_data(), quick_config(epochs=0))

    def test_divergence_is_reported_with_epoch(self):
        with pytest.raises(TrainingDivergedError):
            train_joint(two_domain_data(), quick_config(lr=1e9, epochs=3))


class TestExtractFeatures:
    def test_shape_and_count(self):
        model = trained(epochs=1)
        imgs = two_domain_data()[0].images()
        feats = extract_features(model, imgs)
        assert len(feats) == len(imgs)
        assert all(f.shape == (model.embedding_dim,) for f in feats)

    def test_empty_list_is_fine(self):
        assert extract_features(trained(epochs=1), []) == []

    def test_rejects_wrong_size(self):
        model = trained(epochs=1)
        with pytest.raises(ValidationError):
            extract_features(model, [np.zeros((8, 8, 3))])


class TestFinetune:
    def translated_like(self, seed=7):
        # different people than the training cast, synthetic origin
        ids = synth.sample_identities(3, seed, start_id=300)
        illum = synth.sample_illuminations(1, seed + 1, start_id=40)[0]
        return synth.generate_domain(ids, illum, 4, seed + 2, **SIZE)

    def test_zero_epochs_keeps_warm_weights_bitwise(self):
        model = trained(epochs=1)
        tuned = finetune(model, self.translated_like(),
                         TrainConfig(0.01, 0, 8, seed=5))
        stack_before = model.conv_stack.params()
        stack_after = tuned.conv_stack.params()
        for name in stack_before:
            assert np.array_equal(stack_before[name], stack_after[name])
        assert np.array_equal(model.embedding_layer.params()["w"],
                              tuned.embedding_layer.params()["w"])

    def test_head_is_rebuilt_for_new_label_space(self):
        model = trained(epochs=1)
        tuned = finetune(model, self.translated_like(),
                         TrainConfig(0.01, 0, 8, seed=5))
        assert tuned.num_classes == 3
        assert sorted(tuned.label_mapping) == [300, 301, 302]

    def test_known_identities_keep_their_head_rows(self):
        model = trained(epochs=1)
        # translated versions of the training cast itself
        familiar = synth.generate_domain(synth.sample_identities(4, 0),
                                         synth.sample_illuminations(1, 31)[0],
                                         2, 32, **SIZE)
        tuned = finetune(model, familiar, TrainConfig(0.01, 0, 8, seed=5))
        for ident, col in tuned.label_mapping.items():
            src = model.label_mapping[ident]
            assert np.array_equal(tuned.classifier_head.w[:, col],
                                  model.classifier_head.w[:, src]), ident
            assert tuned.classifier_head.b[col] == model.classifier_head.b[src]

    def test_mixed_label_space_copies_only_the_known_rows(self):
        model = trained(epochs=1)
        cast = synth.sample_identities(2, 0) + \
            synth.sample_identities(1, 9, start_id=300)
        mixed = synth.generate_domain(cast,
                                      synth.sample_illuminations(1, 33)[0],
                                      2, 34, **SIZE)
        tuned = finetune(model, mixed, TrainConfig(0.01, 0, 8, seed=5))
        known = {i: c for i, c in tuned.label_mapping.items() if i < 300}
        assert len(known) == 2
        for ident, col in known.items():
            src = model.label_mapping[ident]
            assert np.array_equal(tuned.classifier_head.w[:, col],
                                  model.classifier_head.w[:, src])
        novel_col = tuned.label_mapping[300]
        # the stranger's row comes from the seeded init, not the source head
        assert not any(
            np.array_equal(tuned.classifier_head.w[:, novel_col],
                           model.classifier_head.w[:, s])
            for s in model.label_mapping.values())

    def test_source_model_is_not_mutated(self):
        model = trained(epochs=2)
        before = {k: v.copy() for k, v in model.params().items()}
        finetune(model, self.translated_like(), TrainConfig(0.01, 2, 8, seed=5))
        after = model.params()
        for name in before:
            assert np.array_equal(before[name], after[name]), name

    def test_training_moves_the_copies_only(self):
        model = trained(epochs=1)
        tuned = finetune(model, self.translated_like(),
                         TrainConfig(0.01, 2, 8, seed=5))
        stack_before = model.conv_stack.params()
        stack_after = tuned.conv_stack.params()
        assert any(not np.array_equal(stack_before[n], stack_after[n])
                   for n in stack_before)

    def test_rejects_geometry_mismatch(self):
        model = trained(epochs=1)
        ids = synth.sample_identities(2, 0, start_id=300)
        illum = synth.sample_illuminations(1, 1, start_id=40)[0]
        wrong = synth.generate_domain(ids, illum, 2, 2, height=32, width=16)
        with pytest.raises(ValidationError):
            finetune(model, wrong, TrainConfig(0.01, 1, 8, seed=5))


class TestCheckpoint:
    def test_round_trip_embeddings_bit_identical(self, tmp_path):
        model = trained(epochs=2)
        path = tmp_path / "reid.npz"
        save_checkpoint(model, path)
        restored = load_checkpoint(path)
        imgs = np.stack(two_domain_data()[0].images()[:6])
        assert np.array_equal(model.embed_batch(imgs), restored.embed_batch(imgs))
        assert restored.label_mapping == model.label_mapping
        assert restored.embedding_dim == model.embedding_dim

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            load_checkpoint(tmp_path / "absent.npz")
