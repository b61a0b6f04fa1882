"""CycleGAN in latent space: two generators, two least-squares discriminators.

Training follows the usual LS-GAN split of roles. Discriminators minimise

    1/2 E[(D_Y(y) - 1)^2] + 1/2 E[D_Y(G(x))^2]      (and the X mirror)

while generators minimise

    1/2 E[(D_Y(G(x)) - 1)^2] + 1/2 E[(D_X(F(y)) - 1)^2]
        + lambda_cycle * L_cyc + lambda_identity * L_identity

The reported ``l_gan`` is always the discriminator-form value above, so
``total = l_gan + lambda_cycle * l_cyc + lambda_identity * l_identity``.
"""
import copy
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import nn
from ._archive import read_archive, write_archive
from .errors import ConfigError, NumericError, ShapeError, StateError

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "molcyclegan-bundle/1"
NETWORKS = ("G", "F", "D_X", "D_Y")
UPDATE_ORDERS = ("generators_first", "simultaneous")

STRUCTURAL = "structural"
PHYSIOCHEMICAL = "physiochemical"
PRESET_EPOCHS = {STRUCTURAL: 100, PHYSIOCHEMICAL: 300}
_DISCRIMINATOR_SIZES = {
    STRUCTURAL: (56, 42, 28, 14, 7, 1),
    PHYSIOCHEMICAL: (48, 36, 28, 18, 12, 7, 1),
}


@dataclass
class TrainConfig:
    lr: float = 1e-4
    lambda_cycle: float = 0.3
    lambda_identity: float = 0.1
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    update_order: str = "generators_first"
    joint_discriminator_batch: bool = True
    checkpoint_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.lr < 0 or self.lambda_cycle < 0 or self.lambda_identity < 0:
            raise ConfigError("lr and loss weights must be non-negative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch norm needs two rows)")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.update_order not in UPDATE_ORDERS:
            raise ConfigError(f"update_order must be one of {UPDATE_ORDERS}")

    @classmethod
    def for_preset(cls, preset, **overrides):
        return cls(epochs=PRESET_EPOCHS[preset], **overrides)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class LossReport:
    l_gan: float
    l_cyc: float
    l_identity: float
    total: float
    d_x: float = float("nan")
    d_y: float = float("nan")
    g_adv: float = float("nan")

    def as_dict(self):
        return asdict(self)

    @staticmethod
    def mean(reports):
        keys = [f.name for f in fields(LossReport)]
        return LossReport(**{k: float(np.mean([getattr(r, k) for r in reports])) for k in keys})


@dataclass
class CycleGanModel:
    G: nn.MlpModel
    F: nn.MlpModel
    D_X: nn.MlpModel
    D_Y: nn.MlpModel
    latent_dim: int
    preset: str = "custom"

    def __post_init__(self):
        d = self.latent_dim
        for name in ("G", "F"):
            net = getattr(self, name)
            if net.in_dim != d or net.out_dim != d:
                raise ShapeError(f"generator {name} must map {d} -> {d}, got {net.in_dim} -> {net.out_dim}")
        for name in ("D_X", "D_Y"):
            net = getattr(self, name)
            if net.in_dim != d or net.out_dim != 1:
                raise ShapeError(f"discriminator {name} must map {d} -> 1, got {net.in_dim} -> {net.out_dim}")

    def networks(self):
        return {name: getattr(self, name) for name in NETWORKS}

    def train(self):
        for net in self.networks().values():
            net.train()
        return self

    def eval(self):
        for net in self.networks().values():
            net.eval()
        return self

    def copy(self):
        return CycleGanModel(self.G.copy(), self.F.copy(), self.D_X.copy(), self.D_Y.copy(),
                             self.latent_dim, self.preset)

    def transform(self, z, direction="xy"):
        """Apply G (``"xy"``) or F (``"yx"``) in eval mode without touching state."""
        net = self.G if direction == "xy" else self.F
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        prev = net.mode
        net.mode = "eval"
        try:
            out, _ = nn.forward_cached(net, z, update_stats=False)
        finally:
            net.mode = prev
        return out


def generator_layers(preset, dim, use_batchnorm=True):
    if preset == STRUCTURAL:
        return [nn.LayerSpec(nn.RESIDUAL, dim, dim, use_batchnorm, True),
                nn.LayerSpec(nn.DENSE, dim, dim, False, False)]
    if preset == PHYSIOCHEMICAL:
        hidden = [nn.LayerSpec(nn.RESIDUAL, dim, dim, use_batchnorm, True) for _ in range(3)]
        return hidden + [nn.LayerSpec(nn.RESIDUAL, dim, dim, False, False)]
    raise ConfigError(f"unknown preset {preset!r}")


def discriminator_layers(preset, dim, use_batchnorm=True):
    if preset not in _DISCRIMINATOR_SIZES:
        raise ConfigError(f"unknown preset {preset!r}")
    sizes = _DISCRIMINATOR_SIZES[preset]
    layers = []
    prev = dim
    for i, width in enumerate(sizes):
        last = i == len(sizes) - 1
        layers.append(nn.LayerSpec(nn.DENSE, prev, width, use_batchnorm and not last, not last))
        prev = width
    return layers


def build_model(preset=STRUCTURAL, latent_dim=56, seed=0, bn_generators=False, bn_discriminators=False):
    """Fresh, Glorot-initialised model for one of the two architecture presets.

    Batch norm is off by default in both network pairs. Per-batch statistics in
    a discriminator normalise away exactly the mean shift it has to detect, and
    in the generator residual it inflates the spread of the moved coordinate.
    Either can be switched back on per network pair.
    """
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    return CycleGanModel(
        G=nn.MlpModel(generator_layers(preset, latent_dim, bn_generators), rngs[0]),
        F=nn.MlpModel(generator_layers(preset, latent_dim, bn_generators), rngs[1]),
        D_X=nn.MlpModel(discriminator_layers(preset, latent_dim, bn_discriminators), rngs[2]),
        D_Y=nn.MlpModel(discriminator_layers(preset, latent_dim, bn_discriminators), rngs[3]),
        latent_dim=latent_dim,
        preset=preset,
    )


# --- losses ---------------------------------------------------------------

def _check_pair(model, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    for name, b in (("x_batch", x), ("y_batch", y)):
        if b.ndim != 2 or b.shape[1] != model.latent_dim:
            raise ShapeError(f"{name} must have shape (m, {model.latent_dim}), got {b.shape}")
    return x, y


def _apply(net, x):
    return nn.forward_cached(net, x, update_stats=False)[0]


def _l1_rows(a):
    return float(np.abs(a).sum(axis=1).mean())


def _lsq_real(d):
    return 0.5 * float(np.mean((d - 1.0) ** 2))


def _lsq_fake(d):
    return 0.5 * float(np.mean(d ** 2))


def _score(D, real, fake, joint=True, update_stats=False):
    """Discriminator outputs on real and fake rows plus the caches to backprop.

    With ``joint`` the two sets go through one forward pass, so train-mode
    batch norm sees both: separately normalised batches would hide any
    shift of the fake batch as a whole.
    """
    if joint:
        out, cache = nn.forward_cached(D, np.vstack([real, fake]), update_stats)
        n = len(real)
        return out[:n], out[n:], cache, None
    r, c_r = nn.forward_cached(D, real, update_stats)
    f, c_f = nn.forward_cached(D, fake, False)
    return r, f, c_r, c_f


def _score_backward(D, d_real, d_fake, c_real, c_fake):
    """Backprop ``(d_real, d_fake)`` through a :func:`_score` pass; returns ``(grads, dfake)``."""
    if c_fake is None:
        grads, dx = nn.backward(D, np.vstack([d_real, d_fake]), c_real)
        return grads, dx[len(d_real):]
    g_r, _ = nn.backward(D, d_real, c_real)
    g_f, dx = nn.backward(D, d_fake, c_fake)
    return nn.add_grads(g_r, g_f), dx


def adversarial_loss(model, x_batch, y_batch, joint=True):
    x, y = _check_pair(model, x_batch, y_batch)
    gx, fy = _apply(model.G, x), _apply(model.F, y)
    dy_real, dy_fake, _, _ = _score(model.D_Y, y, gx, joint)
    dx_real, dx_fake, _, _ = _score(model.D_X, x, fy, joint)
    return _lsq_real(dy_real) + _lsq_fake(dy_fake) + _lsq_real(dx_real) + _lsq_fake(dx_fake)


def cycle_loss(model, x_batch, y_batch):
    x, y = _check_pair(model, x_batch, y_batch)
    return _l1_rows(_apply(model.F, _apply(model.G, x)) - x) + _l1_rows(_apply(model.G, _apply(model.F, y)) - y)


def identity_loss(model, x_batch, y_batch):
    x, y = _check_pair(model, x_batch, y_batch)
    return _l1_rows(_apply(model.G, x) - x) + _l1_rows(_apply(model.F, y) - y)


def total_loss(model, x_batch, y_batch, config=None):
    config = config or TrainConfig()
    l_gan = adversarial_loss(model, x_batch, y_batch, config.joint_discriminator_batch)
    l_cyc = cycle_loss(model, x_batch, y_batch)
    l_id = identity_loss(model, x_batch, y_batch)
    return LossReport(l_gan, l_cyc, l_id, combine(l_gan, l_cyc, l_id, config))


def combine(l_gan, l_cyc, l_id, config):
    return l_gan + config.lambda_cycle * l_cyc + config.lambda_identity * l_id


# --- training -------------------------------------------------------------

def make_optimizers(model, config):
    return {name: nn.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2) for name in NETWORKS}


def train_step(model, x_batch, y_batch, config, optimizers):
    """One joint update of all four networks; returns the pre-update losses."""
    x, y = _check_pair(model, x_batch, y_batch)
    if any(net.mode != "train" for net in model.networks().values()):
        raise StateError("train_step needs the model in train mode")
    m_x, m_y = x.shape[0], y.shape[0]
    lam_c, lam_i = config.lambda_cycle, config.lambda_identity
    joint = config.joint_discriminator_batch

    gx, c_gx = nn.forward_cached(model.G, x)
    fy, c_fy = nn.forward_cached(model.F, y)
    fgx, c_fgx = nn.forward_cached(model.F, gx, update_stats=False)
    gfy, c_gfy = nn.forward_cached(model.G, fy, update_stats=False)
    dy_real, dy_fake, cy_real, cy_fake = _score(model.D_Y, y, gx, joint, update_stats=True)
    dx_real, dx_fake, cx_real, cx_fake = _score(model.D_X, x, fy, joint, update_stats=True)

    d_y = _lsq_real(dy_real) + _lsq_fake(dy_fake)
    d_x = _lsq_real(dx_real) + _lsq_fake(dx_fake)
    l_cyc = _l1_rows(fgx - x) + _l1_rows(gfy - y)
    l_id = _l1_rows(gx - x) + _l1_rows(fy - y)
    g_adv = _lsq_real(dy_fake) + _lsq_real(dx_fake)
    report = LossReport(d_x + d_y, l_cyc, l_id, combine(d_x + d_y, l_cyc, l_id, config), d_x, d_y, g_adv)
    if not np.isfinite(report.total):
        raise NumericError(f"non-finite loss {report.total}")

    # generators: adversarial term flows back through the (frozen) discriminators
    _, d_gx = _score_backward(model.D_Y, np.zeros_like(dy_real), (dy_fake - 1.0) / m_x, cy_real, cy_fake)
    g_f_cyc, d_gx_cyc = nn.backward(model.F, lam_c * np.sign(fgx - x) / m_x, c_fgx)
    d_gx = d_gx + d_gx_cyc + lam_i * np.sign(gx - x) / m_x

    _, d_fy = _score_backward(model.D_X, np.zeros_like(dx_real), (dx_fake - 1.0) / m_y, cx_real, cx_fake)
    g_g_cyc, d_fy_cyc = nn.backward(model.G, lam_c * np.sign(gfy - y) / m_y, c_gfy)
    d_fy = d_fy + d_fy_cyc + lam_i * np.sign(fy - y) / m_y

    g_g, _ = nn.backward(model.G, d_gx, c_gx)
    g_f, _ = nn.backward(model.F, d_fy, c_fy)
    g_g = nn.add_grads(g_g, g_g_cyc)
    g_f = nn.add_grads(g_f, g_f_cyc)

    if config.update_order == "generators_first":
        nn.adam_step(model.G.parameters(), g_g, optimizers["G"])
        nn.adam_step(model.F.parameters(), g_f, optimizers["F"])
        gx, _ = nn.forward_cached(model.G, x, update_stats=False)
        fy, _ = nn.forward_cached(model.F, y, update_stats=False)
        dy_real, dy_fake, cy_real, cy_fake = _score(model.D_Y, y, gx, joint)
        dx_real, dx_fake, cx_real, cx_fake = _score(model.D_X, x, fy, joint)
    g_dy, _ = _score_backward(model.D_Y, (dy_real - 1.0) / m_y, dy_fake / m_x, cy_real, cy_fake)
    g_dx, _ = _score_backward(model.D_X, (dx_real - 1.0) / m_x, dx_fake / m_y, cx_real, cx_fake)
    if config.update_order == "simultaneous":
        nn.adam_step(model.G.parameters(), g_g, optimizers["G"])
        nn.adam_step(model.F.parameters(), g_f, optimizers["F"])
    nn.adam_step(model.D_Y.parameters(), g_dy, optimizers["D_Y"])
    nn.adam_step(model.D_X.parameters(), g_dx, optimizers["D_X"])
    return report


class _CyclingSampler:
    """Endless stream of shuffled indices; reshuffles on exhaustion."""

    def __init__(self, n, rng):
        self.n = n
        self.rng = rng
        self.perm = rng.permutation(n)
        self.pos = 0

    def take(self, m):
        out = []
        while m > 0:
            if self.pos == self.n:
                self.perm = self.rng.permutation(self.n)
                self.pos = 0
            k = min(m, self.n - self.pos)
            out.append(self.perm[self.pos:self.pos + k])
            self.pos += k
            m -= k
        return np.concatenate(out)


def train(model, x_train, y_train, config, optimizers=None, on_epoch=None):
    """Run ``config.epochs`` epochs of :func:`train_step`.

    ``x_train``/``y_train`` are ``(n, latent_dim)`` arrays. An epoch is
    ``n_x // batch_size`` steps over a fresh permutation of X; Y batches come
    from an independently shuffled stream that wraps around. ``on_epoch`` is
    called as ``on_epoch(epoch, report, model, optimizers)`` after each epoch.

    Returns ``(model, history, optimizers)``. On a non-finite loss a
    :class:`NumericError` is raised whose ``last_good`` attribute holds the
    model as of the last completed epoch.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if len(x_train) == 0 or len(y_train) == 0:
        raise ConfigError("training sets must be non-empty")
    if min(len(x_train), len(y_train)) < 2:
        raise ConfigError("training sets need at least 2 points each (batch norm)")
    optimizers = optimizers or make_optimizers(model, config)
    history = []
    if config.epochs == 0:
        return model, history, optimizers
    seeds = np.random.SeedSequence([config.seed, 0x5EED]).spawn(2)
    x_rng, y_rng = np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])
    y_sampler = _CyclingSampler(len(y_train), y_rng)
    m = min(config.batch_size, len(x_train))
    steps = len(x_train) // m
    model.train()
    last_good = (model.copy(), copy.deepcopy(optimizers))
    for epoch in range(1, config.epochs + 1):
        perm = x_rng.permutation(len(x_train))
        reports = []
        try:
            for s in range(steps):
                xb = x_train[perm[s * m:(s + 1) * m]]
                yb = y_train[y_sampler.take(m)]
                reports.append(train_step(model, xb, yb, config, optimizers))
        except NumericError as exc:
            exc.last_good = last_good[0]
            exc.last_good_optimizers = last_good[1]
            exc.epoch = epoch
            raise
        report = LossReport.mean(reports)
        history.append(report)
        log.debug("epoch %d: %s", epoch, report)
        last_good = (model.copy(), copy.deepcopy(optimizers))
        if on_epoch is not None:
            on_epoch(epoch, report, model, optimizers)
    return model, history, optimizers


# --- checkpoint bundle ----------------------------------------------------

def save_bundle(path, model, config=None, optimizers=None, extra=None):
    manifest = {"format": BUNDLE_FORMAT, "latent_dim": model.latent_dim, "preset": model.preset,
                "train_config": asdict(config) if config is not None else None,
                "networks": {}, "extra": extra or {}}
    arrays = {}
    for name, net in model.networks().items():
        entry = {"format": nn.CHECKPOINT_FORMAT, **nn.model_manifest(net)}
        for k, v in {**net.parameters(), **net.buffers()}.items():
            arrays[f"{name}/{k}"] = v
        if optimizers is not None:
            meta, adam_arrays = nn.adam_to_archive(optimizers[name], prefix=f"{name}/")
            entry["adam"] = meta
            arrays.update(adam_arrays)
        manifest["networks"][name] = entry
    write_archive(path, manifest, arrays)


def load_bundle(path):
    """Returns ``(model, config_or_None, optimizers_or_None, manifest)``."""
    manifest, arrays = read_archive(path)
    if manifest.get("format") != BUNDLE_FORMAT:
        raise StateError(f"{path}: not a {BUNDLE_FORMAT} archive (found {manifest.get('format')!r})")
    nets = {}
    optimizers = {}
    for name in NETWORKS:
        entry = manifest["networks"][name]
        prefix = f"{name}/"
        own = {k[len(prefix):]: v for k, v in arrays.items()
               if k.startswith(prefix) and not k.startswith(prefix + "adam.")}
        nets[name] = nn.model_from_manifest(entry, own)
        if "adam" in entry:
            optimizers[name] = nn.adam_from_archive(entry["adam"], arrays, prefix=prefix)
    model = CycleGanModel(**nets, latent_dim=manifest["latent_dim"], preset=manifest["preset"])
    config = TrainConfig.from_dict(manifest["train_config"]) if manifest.get("train_config") else None
    return model, config, (optimizers or None), manifest
