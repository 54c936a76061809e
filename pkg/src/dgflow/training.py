"""Training loops: GAN variants, the 2D VAE, and corrector fine-tuning.

Deterministic given (data, config.seed): one PCG64 stream drives init, batch
selection and all sampling, and updates run on a single thread, so loss
traces are bit-identical across runs.
"""

from dataclasses import dataclass

import numpy as np

from dgflow import nn
from dgflow.errors import ConfigurationError, NumericError
from dgflow.models import (
    DiscriminatorModel,
    GeneratorModel,
    VaeModel,
    make_discriminator,
    make_generator,
    make_vae,
)

LOSS_KINDS = ("non_saturating", "wgan_gp", "wgan_sn")


@dataclass
class GanConfig:
    loss: str = "wgan_gp"
    gen_iters: int = 10000
    disc_iters_per_gen: int = 5
    batch: int = 256
    lr: float = 1e-4
    betas: tuple = (0.5, 0.9)
    gp_lambda: float = 10.0
    seed: int = 0
    hidden: int = 512
    depth: int = 3
    latent_dim: int = 2
    init: str = "uniform"

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigurationError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        for name in ("gen_iters", "disc_iters_per_gen", "batch", "hidden", "depth"):
            if getattr(self, name) < (0 if name == "gen_iters" else 1):
                raise ConfigurationError(f"{name} must be positive")


@dataclass
class VaeConfig:
    epochs: int = 20
    batch: int = 256
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    hidden: int = 256
    depth: int = 2


@dataclass
class CorrectorConfig:
    iters: int = 10000
    batch: int = 64
    sgd_lr: float = 1e-4
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.iters < 0 or self.batch < 1:
            raise ConfigurationError("corrector counts must be positive")


def _softplus(x):
    # log(1 + e^x), stable for large |x|
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def disc_loss_on(disc, real, fake, cfg, gp_eps=None):
    """Discriminator objective on a frozen (real, fake) pair.

    For wgan_gp, pass the interpolation draws `gp_eps` to include the
    penalty term at the corresponding interpolates.
    """
    logits, _ = nn.mlp_forward(disc.net, np.concatenate([real, fake], axis=0))
    d_real = logits[:len(real), 0]
    d_fake = logits[len(real):, 0]
    if cfg.loss == "non_saturating":
        return float(np.mean(_softplus(-d_real)) + np.mean(_softplus(d_fake)))
    loss = float(np.mean(d_fake) - np.mean(d_real))
    if cfg.loss == "wgan_gp" and gp_eps is not None:
        interp = gp_eps * real + (1.0 - gp_eps) * fake
        loss += cfg.gp_lambda * nn.gradient_penalty_value(disc.net, interp)
    return loss


def _disc_update(disc, gen, real, z, gp_eps, cfg, opt):
    """One discriminator step on the given batch; returns (loss, gp_value)."""
    batch = len(real)
    fake, _ = nn.mlp_forward(gen.net, z)

    use_gp = cfg.loss == "wgan_gp"
    if use_gp:
        interp = gp_eps * real + (1.0 - gp_eps) * fake
        stacked = np.concatenate([real, fake, interp], axis=0)
    else:
        stacked = np.concatenate([real, fake], axis=0)
    logits, cache = nn.mlp_forward(disc.net, stacked)
    d_real = logits[:batch, 0]
    d_fake = logits[batch:2 * batch, 0]

    gp_value = 0.0
    if cfg.loss == "non_saturating":
        # BCE on logits: real is the positive class
        loss = float(np.mean(_softplus(-d_real)) + np.mean(_softplus(d_fake)))
        out_grad = np.concatenate([
            -_sigmoid(-d_real) / batch,
            _sigmoid(d_fake) / batch,
        ])[:, None]
    else:
        # critic: minimize E[d(fake)] - E[d(real)]
        loss = float(np.mean(d_fake) - np.mean(d_real))
        out_grad = np.concatenate([
            np.full(batch, -1.0 / batch),
            np.full(batch, 1.0 / batch),
        ])[:, None]
    # loss backward only over the real/fake rows (cache row slices are views)
    loss_rows = slice(0, 2 * batch)
    loss_cache = nn.ForwardCache(cache.inputs[loss_rows],
                                 [p[loss_rows] for p in cache.pre],
                                 [h[loss_rows] for h in cache.post])
    grads, _ = nn.mlp_backward(disc.net, loss_cache, out_grad)
    if use_gp:
        rows = slice(2 * batch, 3 * batch)
        gp_value, gp_grads = nn.gp_value_and_param_gradient(
            disc.net, None, cache=cache, rows=rows)
        grads = [g + cfg.gp_lambda * gg for g, gg in zip(grads, gp_grads)]
        loss += cfg.gp_lambda * gp_value

    nn.adam_step(opt, disc.net.params(), grads, disc.net.param_names())
    if cfg.loss == "wgan_sn":
        nn.spectral_step(disc.net, power_iters=1)
    return loss, gp_value


def _gen_update(disc, gen, z, cfg, opt):
    fake, gcache = nn.mlp_forward(gen.net, z)
    logits, dcache = nn.mlp_forward(disc.net, fake)
    d_fake = logits[:, 0]
    if cfg.loss == "non_saturating":
        loss = float(np.mean(_softplus(-d_fake)))
        out_grad = (-_sigmoid(-d_fake) / cfg.batch)[:, None]
    else:
        loss = float(-np.mean(d_fake))
        out_grad = np.full((cfg.batch, 1), -1.0 / cfg.batch)
    input_grads = nn.backprop_input(disc.net, dcache, out_grad)
    grads, _ = nn.mlp_backward(gen.net, gcache, input_grads)
    nn.adam_step(opt, gen.net.params(), grads, gen.net.param_names())
    return loss


def train_gan(data, cfg, progress=None, initial=None, start_iter=0):
    """Train a generator/discriminator pair; returns (gen, disc, trace).

    trace rows are (iter, loss_d, loss_g, gp) with the last discriminator
    step's values for the iteration. Pass `initial=(gen, disc)` and a
    `start_iter` to resume from checkpoints (weights only; optimizer moments
    restart), in which case trace numbering continues from start_iter.
    """
    train_pts = data.train_points()
    if len(train_pts) == 0:
        raise ConfigurationError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    if initial is not None:
        gen, disc = initial
        if disc.net.out_dim != 1:
            raise ConfigurationError("resumed discriminator must be scalar-output")
    else:
        gen = make_generator(rng, latent_dim=cfg.latent_dim, hidden=cfg.hidden,
                             depth=cfg.depth, init=cfg.init)
        disc = make_discriminator(
            rng,
            kind="wgan_critic" if cfg.loss.startswith("wgan") else "ns_logit",
            hidden=cfg.hidden, depth=cfg.depth,
            spectral_norm=(cfg.loss == "wgan_sn"), init=cfg.init,
        )
        if cfg.loss == "wgan_sn":
            nn.spectral_step(disc.net, power_iters=5)
    if cfg.loss == "wgan_sn" and disc.net.power_iter_state is None:
        disc.net.spectral_norm = True
        disc.net.power_iter_state = [
            (u / np.linalg.norm(u), v / np.linalg.norm(v))
            for u, v in ((rng.standard_normal(l.w.shape[0]),
                          rng.standard_normal(l.w.shape[1]))
                         for l in disc.net.layers)
        ]
    gen_opt = nn.adam_init(gen.net.params(), cfg.lr, *cfg.betas)
    disc_opt = nn.adam_init(disc.net.params(), cfg.lr, *cfg.betas)

    trace = []
    for it in range(start_iter, start_iter + cfg.gen_iters):
        loss_d, gp_value = 0.0, 0.0
        for _ in range(cfg.disc_iters_per_gen):
            real = train_pts[rng.integers(0, len(train_pts), size=cfg.batch)]
            z = rng.standard_normal((cfg.batch, cfg.latent_dim))
            gp_eps = rng.random((cfg.batch, 1)) if cfg.loss == "wgan_gp" else None
            loss_d, gp_value = _disc_update(disc, gen, real, z, gp_eps, cfg, disc_opt)
        z = rng.standard_normal((cfg.batch, cfg.latent_dim))
        loss_g = _gen_update(disc, gen, z, cfg, gen_opt)
        if not (np.isfinite(loss_d) and np.isfinite(loss_g)):
            raise NumericError(f"non-finite loss at generator iteration {it}")
        trace.append((it, loss_d, loss_g, gp_value))
        if progress is not None and (it + 1 - start_iter) % 500 == 0:
            progress(it + 1 - start_iter, cfg.gen_iters, loss_d, loss_g)
    meta = {"loss": cfg.loss, "gen_iters": start_iter + cfg.gen_iters,
            "seed": cfg.seed, "hidden": cfg.hidden, "depth": cfg.depth}
    gen.meta = dict(meta)
    disc.meta = dict(meta)
    return gen, disc, trace


def vae_loss_and_grads(vae, x, xi, obs_log_sigma):
    """Negative mean ELBO and gradients for encoder, decoder and log sigma."""
    batch = len(x)
    enc_out, enc_cache = nn.mlp_forward(vae.encoder, x)
    mean = enc_out[:, :2]
    logvar_raw = enc_out[:, 2:]
    clamped = np.clip(logvar_raw, -10.0, 10.0)
    clamp_mask = (logvar_raw > -10.0) & (logvar_raw < 10.0)
    std = np.exp(0.5 * clamped)
    z = mean + std * xi
    x_hat, dec_cache = nn.mlp_forward(vae.decoder, z)

    sigma = np.exp(obs_log_sigma)
    s2 = sigma ** 2
    resid = x - x_hat
    recon = -np.sum(resid ** 2, axis=1) / (2.0 * s2) - np.log(2.0 * np.pi * s2)
    kl = 0.5 * np.sum(np.exp(clamped) + mean ** 2 - 1.0 - clamped, axis=1)
    loss = float(np.mean(kl - recon))

    # d(-recon)/d x_hat = -resid / s2, averaged over the batch
    dxhat = -resid / (s2 * batch)
    dec_grads, dz = nn.mlp_backward(vae.decoder, dec_cache, dxhat)
    dmean = dz + mean / batch
    dlogvar = dz * xi * 0.5 * std + 0.5 * (np.exp(clamped) - 1.0) / batch
    dlogvar = np.where(clamp_mask, dlogvar, 0.0)
    denc = np.concatenate([dmean, dlogvar], axis=1)
    enc_grads, _ = nn.mlp_backward(vae.encoder, enc_cache, denc)

    # d(-recon)/d log sigma = 2/sigma^2 * ... collapsed: 2 - ||resid||^2/s2 per sample
    dlog_sigma = float(np.mean(2.0 - np.sum(resid ** 2, axis=1) / s2))
    return loss, enc_grads, dec_grads, dlog_sigma


def train_vae(data, epochs, cfg=None):
    """Maximize the ELBO with Adam; obs_sigma is a learned scalar."""
    cfg = cfg or VaeConfig()
    rng = np.random.default_rng(cfg.seed)
    vae = make_vae(rng, hidden=cfg.hidden, depth=cfg.depth)
    obs_log_sigma = np.array([np.log(vae.obs_sigma)])
    params = vae.encoder.params() + vae.decoder.params() + [obs_log_sigma]
    opt = nn.adam_init(params, cfg.lr, *cfg.betas)
    pts = data.train_points()
    n = len(pts)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n - cfg.batch + 1, cfg.batch):
            x = pts[order[lo:lo + cfg.batch]]
            xi = rng.standard_normal((len(x), 2))
            loss, enc_grads, dec_grads, dls = vae_loss_and_grads(
                vae, x, xi, float(obs_log_sigma[0]))
            if not np.isfinite(loss):
                raise NumericError(f"non-finite ELBO at epoch {epoch}")
            grads = enc_grads + dec_grads + [np.array([dls])]
            nn.adam_step(opt, params, grads)
            vae.obs_sigma = float(np.exp(obs_log_sigma[0]))
            epoch_loss += loss
            n_batches += 1
        history.append(epoch_loss / max(n_batches, 1))
    vae.meta = {"epochs": epochs, "seed": cfg.seed, "obs_sigma": vae.obs_sigma}
    return vae, history


def finetune_corrector(d_phi, gen_phi, sample_theta, cfg):
    """Density-ratio corrector: BCE fine-tuning started from d_phi's weights.

    Samples from gen_phi are the positive class, so the trained logit
    satisfies exp(-d_lambda(x)) ~= p_theta(x)/p_phi(x); adding d_lambda to
    d_phi's logit then estimates p_theta/mu. `sample_theta(n, rng)` draws
    from the model being corrected.
    """
    d_lambda = DiscriminatorModel(net=d_phi.net.copy(), kind=d_phi.kind,
                                  meta=dict(d_phi.meta or {}))
    if cfg.iters == 0:
        return d_lambda
    rng = np.random.default_rng(cfg.seed)
    opt = nn.sgd_init(d_lambda.net.params(), cfg.sgd_lr, cfg.momentum)
    for it in range(cfg.iters):
        z = rng.standard_normal((cfg.batch, gen_phi.latent_dim))
        pos, _ = nn.mlp_forward(gen_phi.net, z)
        neg = sample_theta(cfg.batch, rng)
        both = np.concatenate([pos, neg], axis=0)
        logits, cache = nn.mlp_forward(d_lambda.net, both)
        d_pos = logits[:cfg.batch, 0]
        d_neg = logits[cfg.batch:, 0]
        loss = float(np.mean(_softplus(-d_pos)) + np.mean(_softplus(d_neg)))
        if not np.isfinite(loss):
            raise NumericError(f"non-finite corrector loss at iteration {it}")
        out_grad = np.concatenate([
            -_sigmoid(-d_pos) / cfg.batch,
            _sigmoid(d_neg) / cfg.batch,
        ])[:, None]
        grads, _ = nn.mlp_backward(d_lambda.net, cache, out_grad)
        nn.sgd_step(opt, d_lambda.net.params(), grads, d_lambda.net.param_names())
    return d_lambda


def save_trace_csv(path, trace, with_gp=True):
    with open(path, "w") as fh:
        fh.write("iter,loss_d,loss_g,gp\n" if with_gp else "iter,loss_d,loss_g\n")
        for row in trace:
            if with_gp:
                fh.write(f"{row[0]},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g}\n")
            else:
                fh.write(f"{row[0]},{row[1]:.17g},{row[2]:.17g}\n")
