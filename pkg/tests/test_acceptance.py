"""Whole-system checks on the desk-scale benchmark: adaptation trends over
seeds, vote and loss contracts, retrieval oracle equivalence, determinism.

The trend tests share one session-scoped battery (three seeds, every
condition) because each seed trains several models; expect the battery to
take tens of minutes. Each test reports its measured margins on the
terminal even when green.
"""

import math
import time

import numpy as np
import pytest

from illumadapt import nn, reid, synth
from illumadapt.config import ExperimentConfig
from illumadapt.evaluation import AblationConfig, ProbeGallerySplit, cmc
from illumadapt.illum import (IlluminationClassifier, infer_domain,
                              train_illum_classifier)
from illumadapt.pipeline import build_benchmark, run_condition, run_pipeline
from illumadapt.training import TrainConfig
from illumadapt.translation import (LossComponents, _disc_loss_with_grad,
                                    _gen_adv_loss_with_grad,
                                    _masked_l1_with_grad, _mean_l1_with_grad,
                                    adversarial_loss, cycle_loss,
                                    full_objective, identity_mapping_loss,
                                    make_soft_matte, masked_reg_loss, ref_loss)

RNG = np.random.default_rng


def report(capsys, line):
    with capsys.disabled():
        print(f"\n  [{line}]", end="")


# ---------------------------------------------------------------------------
# the three-seed battery shared by the trend tests

@pytest.fixture(scope="session")
def battery():
    cfg = AblationConfig()
    seeds = {}
    core_seconds = 0.0
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        bench = build_benchmark(cfg, seed)
        rs = run_condition(bench, "R+S")
        ours = run_condition(bench, "Ours")
        core_seconds += time.perf_counter() - t0
        cyc = run_condition(bench, "CycleGan")
        draw_rng = RNG(np.random.SeedSequence([seed, 0xab1a]))
        draws = []
        for _ in range(cfg.random_draws):
            k = int(draw_rng.integers(cfg.illuminations))
            draws.append(run_condition(bench, "Ours", forced_domain_index=k))
        seeds[seed] = {"bench": bench, "R+S": rs, "Ours": ours,
                       "CycleGan": cyc, "draws": draws}
    return {"cfg": cfg, "seeds": seeds, "core_seconds": core_seconds}


def fg_mean(result):
    return float(np.mean(np.abs(result["foreground_color_shift"])))


@pytest.mark.slow
def test_adaptation_beats_source_baseline_within_budget(battery, capsys):
    rs = [battery["seeds"][s]["R+S"]["rank1"] for s in battery["cfg"].seeds]
    ours = [battery["seeds"][s]["Ours"]["rank1"] for s in battery["cfg"].seeds]
    wins = sum(o > r for o, r in zip(ours, rs))
    minutes = battery["core_seconds"] / 60.0
    report(capsys, f"adapted {np.mean(ours):.3f} vs baseline {np.mean(rs):.3f}, "
                   f"wins {wins}/3, core {minutes:.1f} min")
    assert np.mean(ours) >= np.mean(rs)
    assert wins >= 2
    assert minutes <= 20.0


@pytest.mark.slow
def test_masked_translation_outranks_plain_and_contains_color_shift(battery, capsys):
    ours = [battery["seeds"][s]["Ours"]["rank1"] for s in battery["cfg"].seeds]
    cyc = [battery["seeds"][s]["CycleGan"]["rank1"] for s in battery["cfg"].seeds]
    fg_ours = [fg_mean(battery["seeds"][s]["Ours"]) for s in battery["cfg"].seeds]
    fg_cyc = [fg_mean(battery["seeds"][s]["CycleGan"]) for s in battery["cfg"].seeds]
    report(capsys, f"masked {np.mean(ours):.3f} vs plain {np.mean(cyc):.3f}; "
                   f"fg shift {np.mean(fg_ours):.4f} vs {np.mean(fg_cyc):.4f}")
    assert np.mean(ours) >= np.mean(cyc)
    assert np.mean(fg_ours) <= np.mean(fg_cyc)


@pytest.mark.slow
def test_inferred_illumination_beats_random_choice(battery, capsys):
    ours = [battery["seeds"][s]["Ours"]["rank1"] for s in battery["cfg"].seeds]
    rand = [d["rank1"] for s in battery["cfg"].seeds
            for d in battery["seeds"][s]["draws"]]
    report(capsys, f"inferred {np.mean(ours):.3f} vs random {np.mean(rand):.3f} "
                   f"over {len(rand)} draws")
    assert np.mean(ours) >= np.mean(rand)


@pytest.mark.slow
def test_translation_narrows_the_histogram_gap(battery, capsys):
    ref = battery["seeds"][battery["cfg"].seeds[0]]["Ours"]
    pairs = [(battery["seeds"][s]["Ours"]["stats_distance_translated_target"],
              battery["seeds"][s]["Ours"]["stats_distance_synthetic_target"])
             for s in battery["cfg"].seeds]
    report(capsys, "translated vs synthetic distance " +
                   ", ".join(f"{t:.3f}<{sy:.3f}" for t, sy in pairs))
    assert ref["stats_distance_translated_target"] < \
        ref["stats_distance_synthetic_target"]


# ---------------------------------------------------------------------------
# the vote: real renders and the counting oracle

class _ScriptedNet:
    def __init__(self, preds, num_classes):
        self.preds = list(preds)
        self.num_classes = num_classes
        self.cursor = 0

    def forward(self, x):
        rows = np.zeros((x.shape[0], self.num_classes))
        for i in range(x.shape[0]):
            rows[i, self.preds[self.cursor]] = 1.0
            self.cursor += 1
        return rows, None


def mode_smallest_index(preds, num_classes):
    counts = [0] * num_classes
    for p in preds:
        counts[p] += 1
    best = 0
    for c in range(1, num_classes):
        if counts[c] > counts[best]:
            best = c
    return best


@pytest.mark.slow
def test_domain_vote_finds_the_true_illumination(capsys):
    catalog = synth.sample_illuminations(6, rng_seed=41)
    ids = synth.sample_identities(8, rng_seed=42)
    domains = [synth.generate_domain(ids, illum, 4, rng_seed=50 + i)
               for i, illum in enumerate(catalog)]
    clf = train_illum_classifier(
        domains, TrainConfig(learning_rate=0.02, epochs=25, batch_size=16,
                             seed=0))
    assert clf.held_out_accuracy >= 0.8

    trial_ids = synth.sample_identities(20, rng_seed=43, start_id=100)
    hits = 0
    pick_rng = RNG(44)
    for trial in range(10):
        true_k = int(pick_rng.integers(len(catalog)))
        cameras = synth.generate_target_domain(
            trial_ids, catalog[true_k], 5, synth.RealnessGap(),
            rng_seed=60 + trial, name=f"trial_{trial}")
        sel = infer_domain(clf, cameras.images())
        hits += sel.k_star == true_k
    report(capsys, f"classifier {clf.held_out_accuracy:.2f} held out, "
                   f"{hits}/10 trials correct")
    assert hits >= 9


def test_domain_vote_matches_the_counting_oracle():
    rng = RNG(45)
    for _ in range(1000):
        num_classes = int(rng.integers(2, 9))
        preds = rng.integers(num_classes, size=int(rng.integers(1, 40))).tolist()
        clf = IlluminationClassifier(
            height=16, width=16, num_domains=num_classes,
            domain_ids=list(range(num_classes)),
            net=_ScriptedNet(preds, num_classes))
        images = [np.full((16, 16, 3), 0.5) for _ in preds]
        assert infer_domain(clf, images).k_star == \
            mode_smallest_index(preds, num_classes)


# ---------------------------------------------------------------------------
# losses against straight-line arithmetic and finite differences

def _loop_mean_abs(a, b):
    total = 0.0
    n = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        total += abs(x - y)
        n += 1
    return total / n


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_losses_match_straight_line_reimplementations(capsys):
    rng = RNG(46)
    real = rng.uniform(0, 1, size=(2, 4, 4, 1))
    fake = rng.uniform(0, 1, size=(2, 4, 4, 1))
    eps = 1e-7
    adv_ref = (sum(math.log(min(max(v, eps), 1 - eps))
                   for v in real.ravel().tolist()) / real.size
               + sum(math.log(1 - min(max(v, eps), 1 - eps))
                     for v in fake.ravel().tolist()) / fake.size)
    worst = _rel(adversarial_loss(real, fake), adv_ref)

    s, fgs, x, gfx, gx, fs = (rng.uniform(-1, 1, size=(2, 4, 4, 3))
                              for _ in range(6))
    worst = max(worst, _rel(cycle_loss(s, fgs, x, gfx),
                            _loop_mean_abs(fgs, s) + _loop_mean_abs(gfx, x)))
    worst = max(worst, _rel(identity_mapping_loss(gx, x, fs, s),
                            _loop_mean_abs(gx, x) + _loop_mean_abs(fs, s)))
    worst = max(worst, _rel(ref_loss(fgs, s), _loop_mean_abs(fgs, s)))
    matte = make_soft_matte(8, 8)
    gs8 = rng.uniform(-1, 1, size=(2, 8, 8, 3))
    s8 = rng.uniform(-1, 1, size=(2, 8, 8, 3))
    masked_ref = 0.0
    for i in range(2):
        for u in range(8):
            for v in range(8):
                for c in range(3):
                    masked_ref += abs(gs8[i, u, v, c] - s8[i, u, v, c]) * matte.m[u, v]
    masked_ref /= gs8.size
    worst = max(worst, _rel(masked_reg_loss(gs8, s8, matte), masked_ref))

    total = full_objective(LossComponents(1.0, 1.0, 1.0, 1.0, 1.0))
    report(capsys, f"worst relative error {worst:.2e}, "
                   f"unit objective {total}")
    assert worst <= 1e-9
    assert total == 27.0


def _fd(fn, x, step=1e-3):
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def test_loss_gradients_match_finite_differences(capsys):
    rng = RNG(47)
    a = rng.uniform(-1, 1, size=(1, 4, 4, 3))
    gap = rng.uniform(0.05, 0.4, size=a.shape) * np.where(rng.random(a.shape) < 0.5, -1, 1)
    b = a - gap
    worst = 0.0

    _, grad = _mean_l1_with_grad(a, b)
    worst = max(worst, nn.relative_error(
        grad, _fd(lambda x: _mean_l1_with_grad(x, b)[0], a.copy())))

    weights = rng.uniform(0.2, 1.0, size=(4, 4))
    _, grad = _masked_l1_with_grad(a, b, weights)
    worst = max(worst, nn.relative_error(
        grad, _fd(lambda x: _masked_l1_with_grad(x, b, weights)[0], a.copy())))

    real = rng.normal(size=(1, 4, 4, 3))
    fake = rng.normal(size=(1, 4, 4, 3))
    _, d_real, d_fake = _disc_loss_with_grad(real, fake, "log")
    worst = max(worst, nn.relative_error(
        d_real, _fd(lambda x: _disc_loss_with_grad(x, fake, "log")[0], real.copy())))
    worst = max(worst, nn.relative_error(
        d_fake, _fd(lambda x: _disc_loss_with_grad(real, x, "log")[0], fake.copy())))
    _, d_gen = _gen_adv_loss_with_grad(fake, "log")
    worst = max(worst, nn.relative_error(
        d_gen, _fd(lambda x: _gen_adv_loss_with_grad(x, "log")[0], fake.copy())))

    report(capsys, f"worst gradient error {worst:.2e}")
    assert worst < 1e-3


# ---------------------------------------------------------------------------
# retrieval scoring against a counting oracle

def _oracle_curve(sims):
    n = sims.shape[0]
    hits = np.zeros(n)
    for j in range(n):
        row = sims[j]
        rank = sum(1 for i in range(n)
                   if row[i] > row[j] or (row[i] == row[j] and i < j))
        hits[rank] += 1
    return np.cumsum(hits) / n


def test_cmc_matches_the_brute_force_oracle(capsys):
    rng = RNG(48)
    checked = 0
    while checked < 100:
        n, dim = 10, 6
        probe = rng.normal(size=(n, dim))
        gallery = rng.normal(size=(n, dim))
        metric = ("cosine", "euclidean")[checked % 2]
        if metric == "cosine":
            pn = probe / np.linalg.norm(probe, axis=1, keepdims=True)
            gn = gallery / np.linalg.norm(gallery, axis=1, keepdims=True)
            sims = pn @ gn.T
        else:
            sims = -np.linalg.norm(probe[:, None] - gallery[None], axis=2)
        if np.unique(sims).size != sims.size:
            continue
        split = ProbeGallerySplit(
            probe=[(probe[i], i) for i in range(n)],
            gallery=[(gallery[i], i) for i in range(n)], seed=0)
        curve = cmc(split, metric=metric)
        expected = _oracle_curve(sims)
        assert np.array_equal(curve.accuracies, expected)
        assert np.all(np.diff(curve.accuracies) >= 0)
        assert curve.accuracies[-1] == 1.0
        checked += 1
    report(capsys, f"{checked} instances matched exactly")
    assert checked >= 100


# ---------------------------------------------------------------------------
# determinism and persistence

def _tiny_config(**overrides):
    base = dict(seed=3, height=32, width=16, num_identities=3,
                num_real_identities=3, num_target_identities=3,
                num_illuminations=2, samples_per_identity=2,
                target_samples_per_identity=2, eval_samples_per_identity=2,
                embedding_dim=16, ngf=4, ndf=4, reid_epochs=2, illum_epochs=2,
                gan_epochs=1, finetune_epochs=1)
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.mark.filterwarnings("ignore::illumadapt.errors.DegenerateDomainsWarning")
def test_reruns_and_round_trips_are_bit_stable(tmp_path, capsys):
    cfg = _tiny_config()
    first = run_pipeline(cfg, tmp_path / "a")
    second = run_pipeline(cfg, tmp_path / "b")
    assert first.metrics == second.metrics

    ids = synth.sample_identities(3, rng_seed=49)
    illums = synth.sample_illuminations(2, rng_seed=50)
    data = synth.generate_domain(ids, illums[0], 2, rng_seed=51,
                                 height=32, width=16)
    model = reid.train_joint([data, synth.generate_domain(
        ids, illums[1], 2, rng_seed=52, height=32, width=16)],
        TrainConfig(learning_rate=0.02, epochs=2, batch_size=4, seed=0),
        embedding_dim=16)
    path = tmp_path / "extractor.npz"
    reid.save_checkpoint(model, path)
    reloaded = reid.load_checkpoint(path)
    images = data.images()
    batch = np.stack(images)
    assert np.array_equal(model.embed_batch(batch), reloaded.embed_batch(batch))

    mpath = tmp_path / "manifest.json"
    synth.save_manifest(data, mpath)
    back = synth.load_manifest(mpath)
    assert back.name == data.name
    assert len(back.samples) == len(data.samples)
    assert all(np.array_equal(a.image, b.image)
               for a, b in zip(back.samples, data.samples))
    assert [(a.identity_id, a.domain_id) for a in back.samples] == \
        [(b.identity_id, b.domain_id) for b in data.samples]
    report(capsys, "metrics equal, checkpoint and manifest round-trip clean")
