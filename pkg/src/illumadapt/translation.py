"""Domain translation: soft matte, translation losses, and GAN training.

The module learns a pair of tanh-bounded generators between a synthetic
source domain and a "real" target domain, regularized so translated images
keep the person's appearance while picking up target-domain photometry.
Images inside this module live in [-1, 1]; conversion to the package's
[0, 1] convention happens at the module boundary.

Loss catalogue (all means over batch, pixels and channels):

  adversarial     log D(x) + log(1 - D(G(s))), on probability score grids
  cycle           |F(G(s)) - s| + |G(F(x)) - x|
  identity map    |G(x) - x| + |F(s) - s|
  reference       |G(s) - s|
  masked reg      |(G(s) - s) * m|, m the soft matte

The full objective weights them as adv + adv + l1*cycle + l2*identity +
l3*masked, default weights (10, 10, 5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import NumericalError, TrainingDivergedError, ValidationError
from .synth import (ORIGIN_SYNTHETIC, TRANSLATED_DOMAIN_OFFSET, DatasetManifest,
                    Sample)
from .training import TrainConfig, from_model_range, stack_canonical, to_model_range
from .imgio import quantize
from .optim import Adam

SCORE_EPS = 1e-7
DEFAULT_LAMBDAS = (10.0, 10.0, 5.0)
ABLATIONS = ("none", "id", "ref", "mask_full")
GAN_MODES = ("log", "lsgan")

# Inputs are clipped just inside (-1, 1) before the inverse-tanh skip; the
# generator is therefore exactly identity up to this margin when the trunk
# is zeroed.
ATANH_MARGIN = 5e-4
CHECKPOINT_VERSION = 1
REPLAY_BUFFER_SIZE = 50


# ---------------------------------------------------------------------------
# Soft matte

@dataclass(frozen=True)
class SoftMatte:
    """Separable Gaussian weight map peaking at 1 on the center pixel.

    The center is the integer pixel (height // 2, width // 2) so that the
    maximum is attained exactly; on even dimensions the true geometric
    center falls between pixels.
    """

    m: np.ndarray
    center: tuple[float, float]
    sigmas: tuple[float, float]


def make_soft_matte(height: int, width: int,
                    sigma_frac: tuple[float, float] = (1 / 3, 1 / 4)) -> SoftMatte:
    """Build the H x W soft matte m[u, v] = exp(-((u-cu)^2 / (2 su^2) +
    (v-cv)^2 / (2 sv^2))) with su = sigma_frac[0] * height and
    sv = sigma_frac[1] * width."""
    if height < 8 or width < 8:
        raise ValidationError(f"height and width must be >= 8, got {height} x {width}")
    su = float(sigma_frac[0]) * height
    sv = float(sigma_frac[1]) * width
    if su <= 0 or sv <= 0:
        raise ValidationError(f"sigmas must be positive, got ({su}, {sv})")
    cu, cv = height // 2, width // 2
    u = np.arange(height)[:, None]
    v = np.arange(width)[None, :]
    m = np.exp(-(((u - cu) ** 2) / (2 * su ** 2) + ((v - cv) ** 2) / (2 * sv ** 2)))
    return SoftMatte(m=m, center=(float(cu), float(cv)), sigmas=(su, sv))


# ---------------------------------------------------------------------------
# Loss operations (reporting/analysis form) and their training-side gradients

def _check_same_shape(name_a: str, a: np.ndarray, name_b: str, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"{name_a} shape {a.shape} != {name_b} shape {b.shape}")


def adversarial_loss(scores_real: np.ndarray, scores_fake: np.ndarray) -> float:
    """log-loss value on probability score grids (higher is better for D).

    Scores must already be probabilities; they are clamped away from 0 and
    1 before the logs.
    """
    if not (np.isfinite(scores_real).all() and np.isfinite(scores_fake).all()):
        raise NumericalError("adversarial_loss received non-finite scores")
    r = np.clip(scores_real, SCORE_EPS, 1 - SCORE_EPS)
    f = np.clip(scores_fake, SCORE_EPS, 1 - SCORE_EPS)
    return float(np.log(r).mean() + np.log(1 - f).mean())


def _mean_l1_with_grad(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """mean |a - b| and its gradient with respect to a."""
    diff = a - b
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def cycle_loss(s_batch, FGs_batch, x_batch, GFx_batch) -> float:
    """Two-directional reconstruction error after a round trip."""
    _check_same_shape("s", s_batch, "F(G(s))", FGs_batch)
    _check_same_shape("x", x_batch, "G(F(x))", GFx_batch)
    return (float(np.abs(FGs_batch - s_batch).mean())
            + float(np.abs(GFx_batch - x_batch).mean()))


def identity_mapping_loss(Gx_batch, x_batch, Fs_batch, s_batch) -> float:
    """How far each generator moves images already in its output domain."""
    _check_same_shape("G(x)", Gx_batch, "x", x_batch)
    _check_same_shape("F(s)", Fs_batch, "s", s_batch)
    return (float(np.abs(Gx_batch - x_batch).mean())
            + float(np.abs(Fs_batch - s_batch).mean()))


def ref_loss(Gs_batch, s_batch) -> float:
    """Unweighted drift of the translated image from its source."""
    _check_same_shape("G(s)", Gs_batch, "s", s_batch)
    return float(np.abs(Gs_batch - s_batch).mean())


def masked_reg_loss(Gs_batch, s_batch, matte: SoftMatte) -> float:
    """Drift weighted by the matte: changes near the person cost most."""
    _check_same_shape("G(s)", Gs_batch, "s", s_batch)
    if matte.m.shape != Gs_batch.shape[1:3]:
        raise ValidationError(
            f"matte shape {matte.m.shape} does not match images {Gs_batch.shape}")
    return float((np.abs(Gs_batch - s_batch) * matte.m[None, :, :, None]).mean())


def _masked_l1_with_grad(a: np.ndarray, b: np.ndarray,
                         m: np.ndarray) -> tuple[float, np.ndarray]:
    diff = a - b
    w = m[None, :, :, None]
    return float((np.abs(diff) * w).mean()), np.sign(diff) * w / diff.size


@dataclass(frozen=True)
class LossComponents:
    adv_g: float
    adv_f: float
    cycle: float
    identity: float
    mask: float


def full_objective(components: LossComponents,
                   lambdas: tuple[float, float, float] = DEFAULT_LAMBDAS) -> float:
    """Weighted sum of the five loss components.

    With the identity and mask weights at zero this reduces to the plain
    cycle-consistent adversarial objective.
    """
    for name, value in vars(components).items():
        if not np.isfinite(value):
            raise NumericalError(f"loss component {name} is not finite: {value}")
    l1, l2, l3 = lambdas
    return (components.adv_g + components.adv_f + l1 * components.cycle
            + l2 * components.identity + l3 * components.mask)


# Training-side adversarial pieces work on raw logits for stability; the
# reported adversarial_loss value is computed on the sigmoid of the same
# logits, so logs always reflect the probability-form definition.

def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _disc_loss_with_grad(real_logits, fake_logits, mode):
    """Discriminator objective (minimized) and grads w.r.t. both logit grids."""
    n_r, n_f = real_logits.size, fake_logits.size
    if mode == "log":
        loss = float(_softplus(-real_logits).mean() + _softplus(fake_logits).mean())
        d_real = (_sigmoid(real_logits) - 1.0) / n_r
        d_fake = _sigmoid(fake_logits) / n_f
    elif mode == "lsgan":
        loss = float(((real_logits - 1.0) ** 2).mean() + (fake_logits ** 2).mean())
        d_real = 2.0 * (real_logits - 1.0) / n_r
        d_fake = 2.0 * fake_logits / n_f
    else:
        raise ValidationError(f"gan_mode must be one of {GAN_MODES}, got {mode!r}")
    return loss, d_real, d_fake


def _gen_adv_loss_with_grad(fake_logits, mode):
    """Generator-side adversarial term (minimized) and grad w.r.t. logits.

    In log mode this is the non-saturating form -log D(G(s)), which shares
    its optima with the saturating textbook expression but keeps gradients
    alive when the discriminator wins early.
    """
    n = fake_logits.size
    if mode == "log":
        loss = float(_softplus(-fake_logits).mean())
        d_fake = (_sigmoid(fake_logits) - 1.0) / n
    elif mode == "lsgan":
        loss = float(((fake_logits - 1.0) ** 2).mean())
        d_fake = 2.0 * (fake_logits - 1.0) / n
    else:
        raise ValidationError(f"gan_mode must be one of {GAN_MODES}, got {mode!r}")
    return loss, d_fake


# ---------------------------------------------------------------------------
# Networks

class ResidualBlock(nn.Layer):
    """conv-norm-relu-conv-norm with an additive skip."""

    def __init__(self, channels: int, rng: np.random.Generator,
                 zero_last: bool = False):
        # zero_last zeroes conv2; norm2 then sees zeros and emits beta = 0,
        # so the whole block starts as the identity.
        self.body = nn.Sequential([
            ("conv1", nn.Conv2d(channels, channels, 3, init="gaussian", rng=rng)),
            ("norm1", nn.InstanceNorm(channels)),
            ("act", nn.ReLU()),
            ("conv2", nn.Conv2d(channels, channels, 3,
                                init="zero" if zero_last else "gaussian", rng=rng)),
            ("norm2", nn.InstanceNorm(channels)),
        ])

    def params(self):
        return self.body.params()

    def forward(self, x):
        h, cache = self.body.forward(x)
        return x + h, cache

    def backward(self, cache, dy):
        dx_body, grads = self.body.backward(cache, dy)
        return dy + dx_body, grads


class Generator(nn.Layer):
    """Encoder-residual-decoder trunk around an exact-identity skip.

    The output is tanh(atanh(clip(x)) + trunk(x)): with a zeroed trunk the
    map is the identity up to the clip margin, and during training the
    trunk only has to learn the *change* the translation needs.
    """

    def __init__(self, ngf: int = 16, rng: np.random.Generator | None = None,
                 init: str = "gaussian", num_res_blocks: int = 2):
        rng = rng or np.random.default_rng(0)
        if init not in ("gaussian", "identity"):
            raise ValidationError(f"generator init must be gaussian|identity, got {init!r}")
        zero_last = init == "identity"
        layers: list[tuple[str, nn.Layer]] = [
            ("enc1", nn.Conv2d(3, ngf, 3, init="gaussian", rng=rng)),
            ("enc1n", nn.InstanceNorm(ngf)),
            ("enc1a", nn.ReLU()),
            ("down1", nn.Conv2d(ngf, 2 * ngf, 3, stride=2, init="gaussian", rng=rng)),
            ("down1n", nn.InstanceNorm(2 * ngf)),
            ("down1a", nn.ReLU()),
            ("down2", nn.Conv2d(2 * ngf, 4 * ngf, 3, stride=2, init="gaussian", rng=rng)),
            ("down2n", nn.InstanceNorm(4 * ngf)),
            ("down2a", nn.ReLU()),
        ]
        for i in range(num_res_blocks):
            layers.append((f"res{i + 1}", ResidualBlock(4 * ngf, rng, zero_last=zero_last)))
        layers += [
            ("up1", nn.Upsample2x()),
            ("up1c", nn.Conv2d(4 * ngf, 2 * ngf, 3, init="gaussian", rng=rng)),
            ("up1n", nn.InstanceNorm(2 * ngf)),
            ("up1a", nn.ReLU()),
            ("up2", nn.Upsample2x()),
            ("up2c", nn.Conv2d(2 * ngf, ngf, 3, init="gaussian", rng=rng)),
            ("up2n", nn.InstanceNorm(ngf)),
            ("up2a", nn.ReLU()),
            ("out", nn.Conv2d(ngf, 3, 3, init="zero" if zero_last else "gaussian",
                              rng=rng)),
        ]
        self.trunk = nn.Sequential(layers)
        self.ngf = ngf
        self.num_res_blocks = num_res_blocks

    def params(self):
        return self.trunk.params()

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != 3 or x.shape[1] % 4 or x.shape[2] % 4:
            raise ValidationError(
                f"generator expects (B, 4k, 4k', 3) input, got {x.shape}")
        t = np.clip(x, -1 + ATANH_MARGIN, 1 - ATANH_MARGIN)
        skip = np.arctanh(t)
        trunk_out, trunk_cache = self.trunk.forward(x)
        y = np.tanh(skip + trunk_out)
        return y, (x, t, y, trunk_cache)

    def backward(self, cache, dy):
        x, t, y, trunk_cache = cache
        dz = dy * (1.0 - y ** 2)
        # Skip branch: d atanh = 1/(1-t^2), zero where the clip saturated.
        dskip = np.where(np.abs(x) < 1 - ATANH_MARGIN, dz / (1.0 - t ** 2), 0.0)
        dtrunk_in, grads = self.trunk.backward(trunk_cache, dz)
        return dskip + dtrunk_in, grads


def build_discriminator(ndf: int = 16,
                        rng: np.random.Generator | None = None) -> nn.Sequential:
    """3-layer patch discriminator emitting a logit score grid."""
    rng = rng or np.random.default_rng(0)
    return nn.Sequential([
        ("conv1", nn.Conv2d(3, ndf, 4, stride=2, pad=1, init="gaussian", rng=rng)),
        ("act1", nn.LeakyReLU(0.2)),
        ("conv2", nn.Conv2d(ndf, 2 * ndf, 4, stride=2, pad=1, init="gaussian", rng=rng)),
        ("norm2", nn.InstanceNorm(2 * ndf)),
        ("act2", nn.LeakyReLU(0.2)),
        ("conv3", nn.Conv2d(2 * ndf, 1, 4, stride=1, pad=1, init="gaussian", rng=rng)),
    ])


@dataclass(eq=False)
class TranslationModel:
    height: int
    width: int
    G: Generator
    F: Generator
    DR: nn.Sequential
    DS: nn.Sequential
    matte: SoftMatte
    lambdas: tuple[float, float, float]
    gan_mode: str
    source_domain_id: int | None = None
    version: int = CHECKPOINT_VERSION
    history: dict = field(default_factory=dict)

    @classmethod
    def build(cls, height: int = 64, width: int = 32, ngf: int = 16, ndf: int = 16,
              lambdas: tuple[float, float, float] = DEFAULT_LAMBDAS,
              gan_mode: str = "log", init: str = "gaussian",
              seed: int = 0) -> "TranslationModel":
        if gan_mode not in GAN_MODES:
            raise ValidationError(f"gan_mode must be one of {GAN_MODES}, got {gan_mode!r}")
        if any(l < 0 for l in lambdas) or len(lambdas) != 3:
            raise ValidationError(f"lambdas must be 3 non-negative reals, got {lambdas}")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6a4]))
        return cls(
            height=height, width=width,
            G=Generator(ngf, rng, init=init),
            F=Generator(ngf, rng, init=init),
            DR=build_discriminator(ndf, rng),
            DS=build_discriminator(ndf, rng),
            matte=make_soft_matte(height, width),
            lambdas=tuple(float(l) for l in lambdas),
            gan_mode=gan_mode,
        )

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, model in (("G", self.G), ("F", self.F),
                              ("DR", self.DR), ("DS", self.DS)):
            for name, arr in model.params().items():
                out[f"{prefix}.{name}"] = arr
        return out


class _ReplayBuffer:
    """Pool of past fakes; half the time the discriminator sees an old one."""

    def __init__(self, rng: np.random.Generator, capacity: int = REPLAY_BUFFER_SIZE):
        self.rng = rng
        self.capacity = capacity
        self.images: list[np.ndarray] = []

    def query(self, batch: np.ndarray) -> np.ndarray:
        out = []
        for img in batch:
            if len(self.images) < self.capacity:
                self.images.append(img.copy())
                out.append(img)
            elif self.rng.random() < 0.5:
                k = int(self.rng.integers(len(self.images)))
                out.append(self.images[k])
                self.images[k] = img.copy()
            else:
                out.append(img)
        return np.stack(out)


def _prefixed(grads: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v for k, v in grads.items()}


def train_translation(source: DatasetManifest, target: DatasetManifest,
                      lambdas: tuple[float, float, float] = DEFAULT_LAMBDAS,
                      config: TrainConfig | None = None,
                      ablation: str = "mask_full",
                      gan_mode: str = "log",
                      ngf: int = 16, ndf: int = 16) -> TranslationModel:
    """Alternating generator/discriminator optimization.

    ``ablation`` selects the generator regularizers: ``none`` trains the
    bare cycle objective, ``id`` adds the identity-mapping term, ``ref``
    adds the reference term instead, and ``mask_full`` trains the complete
    objective (identity + matte-weighted drift). Target identity labels are
    never read. Deterministic given the config seed.
    """
    if ablation not in ABLATIONS:
        raise ValidationError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")
    if not source.samples or not target.samples:
        raise ValidationError("source and target must both be non-empty")
    if any(s.origin != ORIGIN_SYNTHETIC for s in source.samples):
        raise ValidationError("source manifest must be synthetic")
    if len(source.domain_ids) != 1:
        raise ValidationError(
            f"source must be a single domain, got {sorted(source.domain_ids)}")
    if (source.height, source.width) != (target.height, target.width):
        raise ValidationError("source and target image sizes differ")
    config = config or TrainConfig(learning_rate=2e-4, epochs=10, batch_size=4, seed=0)
    if config.epochs < 1:
        raise ValidationError("train_translation needs epochs >= 1")
    bs = config.batch_size
    if len(source.samples) < bs or len(target.samples) < bs:
        raise ValidationError(
            f"need at least batch_size={bs} samples per side, got "
            f"{len(source.samples)} source / {len(target.samples)} target")

    model = TranslationModel.build(
        height=source.height, width=source.width, ngf=ngf, ndf=ndf,
        lambdas=lambdas, gan_mode=gan_mode, seed=config.seed)
    model.source_domain_id = next(iter(source.domain_ids))
    G, F, DR, DS = model.G, model.F, model.DR, model.DS
    matte_arr = model.matte.m
    l1, l2, l3 = model.lambdas

    s_all = to_model_range(stack_canonical(list(source.samples))[0])
    x_all = to_model_range(stack_canonical(list(target.samples))[0])

    gen_params = {**_prefixed(G.params(), "G"), **_prefixed(F.params(), "F")}
    disc_params = {**_prefixed(DR.params(), "DR"), **_prefixed(DS.params(), "DS")}
    opt_gen = Adam(gen_params, lr=config.learning_rate, beta1=0.5)
    opt_disc = Adam(disc_params, lr=config.learning_rate, beta1=0.5)

    rng = np.random.default_rng(config.seed)
    pool_r = _ReplayBuffer(np.random.default_rng(np.random.SeedSequence([config.seed, 1])))
    pool_s = _ReplayBuffer(np.random.default_rng(np.random.SeedSequence([config.seed, 2])))

    steps = min(len(s_all), len(x_all)) // bs
    log_keys = ("adv_g", "adv_f", "cycle", "identity", "ref", "mask",
                "disc_r", "disc_s", "total")
    history: dict[str, list[float]] = {k: [] for k in log_keys}

    for epoch in range(config.epochs):
        s_order = rng.permutation(len(s_all))
        x_order = rng.permutation(len(x_all))
        sums = dict.fromkeys(log_keys, 0.0)

        for step in range(steps):
            s = s_all[s_order[step * bs:(step + 1) * bs]]
            x = x_all[x_order[step * bs:(step + 1) * bs]]

            # --- generator step -------------------------------------------
            Gs, cGs = G.forward(s)
            Fx, cFx = F.forward(x)
            FGs, cFGs = F.forward(Gs)
            GFx, cGFx = G.forward(Fx)
            dr_logits, cDRf = DR.forward(Gs)
            ds_logits, cDSf = DS.forward(Fx)

            adv_g, d_dr = _gen_adv_loss_with_grad(dr_logits, gan_mode)
            adv_f, d_ds = _gen_adv_loss_with_grad(ds_logits, gan_mode)
            cyc_a, dFGs = _mean_l1_with_grad(FGs, s)
            cyc_b, dGFx = _mean_l1_with_grad(GFx, x)

            grads_g: dict[str, np.ndarray] = {}
            grads_f: dict[str, np.ndarray] = {}

            # Paths ending at Gs: adversarial, cycle through F, regularizers.
            dGs, _ = DR.backward(cDRf, d_dr)
            dGs_cyc, gF = F.backward(cFGs, l1 * dFGs)
            nn.accumulate(grads_f, gF)
            dGs = dGs + dGs_cyc

            # Paths ending at Fx: adversarial, cycle through G.
            dFx, _ = DS.backward(cDSf, d_ds)
            dFx_cyc, gG = G.backward(cGFx, l1 * dGFx)
            nn.accumulate(grads_g, gG)
            dFx = dFx + dFx_cyc

            id_val = 0.0
            ref_val = 0.0
            mask_val = 0.0
            if ablation in ("id", "mask_full"):
                Gx, cGx = G.forward(x)
                Fs, cFs = F.forward(s)
                ida, dGx = _mean_l1_with_grad(Gx, x)
                idb, dFs = _mean_l1_with_grad(Fs, s)
                id_val = ida + idb
                _, gG2 = G.backward(cGx, l2 * dGx)
                nn.accumulate(grads_g, gG2)
                _, gF2 = F.backward(cFs, l2 * dFs)
                nn.accumulate(grads_f, gF2)
            if ablation == "ref":
                ref_val, dGs_ref = _mean_l1_with_grad(Gs, s)
                dGs = dGs + l2 * dGs_ref
            if ablation == "mask_full":
                mask_val, dGs_mask = _masked_l1_with_grad(Gs, s, matte_arr)
                dGs = dGs + l3 * dGs_mask

            _, gG1 = G.backward(cGs, dGs)
            nn.accumulate(grads_g, gG1)
            _, gF1 = F.backward(cFx, dFx)
            nn.accumulate(grads_f, gF1)

            total = (adv_g + adv_f + l1 * (cyc_a + cyc_b)
                     + l2 * (id_val + ref_val) + l3 * mask_val)
            if not np.isfinite(total):
                raise TrainingDivergedError(epoch, "generator objective")
            opt_gen.step({**_prefixed(grads_g, "G"), **_prefixed(grads_f, "F")})

            # --- discriminator step ---------------------------------------
            fakes_r = pool_r.query(Gs)
            fakes_s = pool_s.query(Fx)
            disc_r = _disc_step(DR, x, fakes_r, gan_mode, opt_disc, "DR")
            disc_s = _disc_step(DS, s, fakes_s, gan_mode, opt_disc, "DS")
            if not np.isfinite(disc_r + disc_s):
                raise TrainingDivergedError(epoch, "discriminator objective")

            sums["adv_g"] += adv_g
            sums["adv_f"] += adv_f
            sums["cycle"] += cyc_a + cyc_b
            sums["identity"] += id_val
            sums["ref"] += ref_val
            sums["mask"] += mask_val
            sums["disc_r"] += disc_r
            sums["disc_s"] += disc_s
            sums["total"] += total

        for k in log_keys:
            history[k].append(sums[k] / max(steps, 1))

    model.history = history
    return model


def _disc_step(disc: nn.Sequential, real: np.ndarray, fake: np.ndarray,
               gan_mode: str, opt: Adam, prefix: str) -> float:
    real_logits, c_real = disc.forward(real)
    fake_logits, c_fake = disc.forward(fake)
    loss, d_real, d_fake = _disc_loss_with_grad(real_logits, fake_logits, gan_mode)
    grads: dict[str, np.ndarray] = {}
    _, g1 = disc.backward(c_real, d_real)
    nn.accumulate(grads, g1)
    _, g2 = disc.backward(c_fake, d_fake)
    nn.accumulate(grads, g2)
    opt.step(_prefixed(grads, prefix))
    return loss


def translate(model: TranslationModel, source: DatasetManifest) -> DatasetManifest:
    """Push every source image through G, carrying labels over.

    Pure function of (model, source): no randomness, so repeated calls are
    bit-identical. The output manifest gets a fresh translated-domain id.
    """
    if not source.samples:
        raise ValidationError("source manifest is empty")
    if (source.height, source.width) != (model.height, model.width):
        raise ValidationError(
            f"source is {source.height}x{source.width}, model expects "
            f"{model.height}x{model.width}")
    if model.source_domain_id is not None and \
            source.domain_ids != {model.source_domain_id}:
        raise ValidationError(
            f"model was trained on domain {model.source_domain_id}, "
            f"source covers {sorted(source.domain_ids)}")

    src_domain = next(iter(source.domain_ids))
    out = DatasetManifest(name=f"{source.name}_translated",
                          height=source.height, width=source.width)
    images = np.stack([s.image for s in source.samples])
    translated = []
    for start in range(0, len(images), 16):
        y, _ = model.G.forward(to_model_range(images[start:start + 16]))
        translated.append(from_model_range(y))
    translated = np.concatenate(translated)
    for s, img in zip(source.samples, translated):
        out.samples.append(Sample(
            image=quantize(img),
            identity_id=s.identity_id,
            domain_id=TRANSLATED_DOMAIN_OFFSET + src_domain,
            origin=ORIGIN_SYNTHETIC,
            path=s.path,
        ))
    return out


def save_checkpoint(model: TranslationModel, path) -> None:
    meta = {
        "kind": "translation",
        "version": model.version,
        "height": model.height,
        "width": model.width,
        "ngf": model.G.ngf,
        "ndf": model.DR.layers[0][1].cout,
        "num_res_blocks": model.G.num_res_blocks,
        "lambdas": list(model.lambdas),
        "gan_mode": model.gan_mode,
        "source_domain_id": model.source_domain_id,
    }
    nn.save_params(path, model.params(), meta)


def load_checkpoint(path) -> TranslationModel:
    params, meta = nn.load_params(path)
    if meta.get("kind") != "translation":
        raise ValidationError(f"checkpoint at {path} is not a translation model")
    model = TranslationModel.build(
        height=meta["height"], width=meta["width"], ngf=meta["ngf"],
        ndf=meta["ndf"], lambdas=tuple(meta["lambdas"]),
        gan_mode=meta["gan_mode"])
    model.version = meta["version"]
    model.source_domain_id = meta["source_domain_id"]
    set_model_params(model, params)
    return model


def set_model_params(model: TranslationModel, values: dict[str, np.ndarray]) -> None:
    live = model.params()
    missing = set(live) - set(values)
    if missing:
        raise ValidationError(f"checkpoint missing parameters: {sorted(missing)[:4]}")
    for name, arr in live.items():
        if values[name].shape != arr.shape:
            raise ValidationError(
                f"parameter {name} shape {values[name].shape} != {arr.shape}")
        arr[...] = values[name]
