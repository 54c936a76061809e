"""Model wrappers and JSON checkpoint persistence.

The generator and discriminator follow the standard fully connected toy
architecture for 2D data: three 512-unit ReLU hidden layers, identity output.
The VAE is a small 2D-latent analogue (Gaussian posterior and observation
model) used to exercise density-ratio correction for models without their own
discriminator.

Checkpoints are JSON with decimal-encoded float64 weights; Python's repr
emits the shortest round-tripping decimal form, so save -> load -> save is
byte-identical.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from dgflow import nn
from dgflow.errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointVersionError,
    ConfigurationError,
)

FORMAT_VERSION = 1
DEFAULT_HIDDEN = 512
DEFAULT_DEPTH = 3
VAE_HIDDEN = 256
LOGVAR_CLAMP = 10.0


@dataclass
class GeneratorModel:
    net: nn.Mlp  # R^latent_dim -> R^2
    meta: dict = None

    @property
    def latent_dim(self):
        return self.net.in_dim


@dataclass
class DiscriminatorModel:
    net: nn.Mlp  # R^2 -> R^1
    kind: str = "ns_logit"  # ns_logit | wgan_critic
    meta: dict = None

    def logits(self, x):
        out, _ = nn.mlp_forward(self.net, x)
        return out[:, 0]


@dataclass
class VaeModel:
    encoder: nn.Mlp  # R^2 -> R^4 (mean || log-variance)
    decoder: nn.Mlp  # R^2 -> R^2
    obs_sigma: float = 0.1
    meta: dict = None


def make_generator(rng, latent_dim=2, hidden=DEFAULT_HIDDEN, depth=DEFAULT_DEPTH,
                   init="uniform"):
    dims = [latent_dim] + [hidden] * depth + [2]
    return GeneratorModel(net=nn.init_mlp(dims, rng, init=init))


def make_discriminator(rng, kind="ns_logit", hidden=DEFAULT_HIDDEN, depth=DEFAULT_DEPTH,
                       spectral_norm=False, init="uniform"):
    dims = [2] + [hidden] * depth + [1]
    net = nn.init_mlp(dims, rng, spectral_norm=spectral_norm, init=init)
    return DiscriminatorModel(net=net, kind=kind)


def make_vae(rng, hidden=VAE_HIDDEN, depth=2, init="uniform"):
    enc = nn.init_mlp([2] + [hidden] * depth + [4], rng, init=init)
    dec = nn.init_mlp([2] + [hidden] * depth + [2], rng, init=init)
    return VaeModel(encoder=enc, decoder=dec, obs_sigma=0.1)


def sample_prior(n, seed, dim=2):
    """n i.i.d. standard-normal latent rows."""
    if n <= 0:
        raise ConfigurationError("n must be positive")
    return np.random.default_rng(seed).standard_normal((n, dim))


def generate(gen, latents):
    """Map latent rows through the generator."""
    out, _ = nn.mlp_forward(gen.net, latents)
    return out


def vae_reconstruct(vae, x, seed):
    """Reparameterized reconstruction: returns (x_hat, mean, logvar)."""
    enc_out, _ = nn.mlp_forward(vae.encoder, x)
    mean = enc_out[:, :2]
    logvar = np.clip(enc_out[:, 2:], -LOGVAR_CLAMP, LOGVAR_CLAMP)
    xi = np.random.default_rng(seed).standard_normal(mean.shape)
    z = mean + np.exp(0.5 * logvar) * xi
    x_hat, _ = nn.mlp_forward(vae.decoder, z)
    return x_hat, mean, logvar


def vae_decode(vae, z):
    out, _ = nn.mlp_forward(vae.decoder, z)
    return out


def vae_sample(vae, n, seed):
    """Decode prior draws; the VAE's generative path."""
    z = sample_prior(n, seed)
    return vae_decode(vae, z)


def elbo_terms(vae, x, seed):
    """Per-sample reconstruction log-likelihood and KL(q || N(0, I))."""
    x = np.asarray(x, dtype=np.float64)
    x_hat, mean, logvar = vae_reconstruct(vae, x, seed)
    s2 = vae.obs_sigma ** 2
    recon = -np.sum((x - x_hat) ** 2, axis=1) / (2.0 * s2) - np.log(2.0 * np.pi * s2)
    kl = 0.5 * np.sum(np.exp(logvar) + mean ** 2 - 1.0 - logvar, axis=1)
    return recon, kl


def _layers_spec(net):
    return [
        {"in": int(l.w.shape[0]), "out": int(l.w.shape[1]), "activation": l.activation}
        for l in net.layers
    ]


def _weights_dict(net, prefix=""):
    out = {}
    for i, layer in enumerate(net.layers):
        out[f"{prefix}L{i}.w"] = layer.w.tolist()
        out[f"{prefix}L{i}.b"] = layer.b.tolist()
    return out


def save_checkpoint(model, path, meta=None):
    """Serialize a model to the checkpoint JSON schema."""
    meta = dict(meta or {})
    if isinstance(model, GeneratorModel):
        kind = "generator"
        layers = _layers_spec(model.net)
        weights = _weights_dict(model.net)
    elif isinstance(model, DiscriminatorModel):
        kind = "discriminator"
        layers = _layers_spec(model.net)
        weights = _weights_dict(model.net)
        meta.setdefault("discriminator_kind", model.kind)
    elif isinstance(model, VaeModel):
        kind = "vae"
        layers = _layers_spec(model.encoder) + _layers_spec(model.decoder)
        weights = _weights_dict(model.encoder)
        n_enc = len(model.encoder.layers)
        for i, layer in enumerate(model.decoder.layers):
            weights[f"L{n_enc + i}.w"] = layer.w.tolist()
            weights[f"L{n_enc + i}.b"] = layer.b.tolist()
        meta.setdefault("encoder_layers", n_enc)
        meta.setdefault("obs_sigma", model.obs_sigma)
    else:
        raise ConfigurationError(f"cannot checkpoint {type(model).__name__}")
    if getattr(model, "meta", None):
        merged = dict(model.meta)
        merged.update(meta)
        meta = merged
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "layers": layers,
        "weights": weights,
        "meta": meta,
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
    os.replace(tmp, path)


def _build_net(layer_specs, weights, offset=0):
    layers = []
    for i, spec in enumerate(layer_specs):
        try:
            w = np.array(weights[f"L{offset + i}.w"], dtype=np.float64)
            b = np.array(weights[f"L{offset + i}.b"], dtype=np.float64)
            activation = spec["activation"]
            fan_in, fan_out = int(spec["in"]), int(spec["out"])
        except (KeyError, TypeError) as exc:
            raise CheckpointFormatError(f"missing or malformed layer {offset + i}: {exc}") from None
        if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise CheckpointShapeError(
                f"layer {offset + i}: weights {w.shape}/{b.shape} do not match "
                f"declared dims ({fan_in}, {fan_out})"
            )
        if activation not in nn.ACTIVATIONS:
            raise CheckpointFormatError(f"layer {offset + i}: unknown activation {activation!r}")
        layers.append(nn.Layer(w, b, activation))
    return nn.Mlp(layers)


def load_checkpoint(path):
    """Load a checkpoint; raises a distinct error per failure mode."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise CheckpointFormatError(f"{path}: top-level JSON must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format_version {version!r}, expected {FORMAT_VERSION}")
    for field_name in ("kind", "layers", "weights"):
        if field_name not in doc:
            raise CheckpointFormatError(f"{path}: missing field {field_name!r}")
    kind = doc["kind"]
    meta = doc.get("meta", {})
    if kind == "generator":
        net = _build_net(doc["layers"], doc["weights"])
        return GeneratorModel(net=net, meta=meta)
    if kind == "discriminator":
        net = _build_net(doc["layers"], doc["weights"])
        if net.out_dim != 1:
            raise CheckpointShapeError(f"{path}: discriminator output dim {net.out_dim} != 1")
        return DiscriminatorModel(net=net, kind=meta.get("discriminator_kind", "ns_logit"), meta=meta)
    if kind == "vae":
        n_enc = meta.get("encoder_layers")
        if not isinstance(n_enc, int) or not 0 < n_enc < len(doc["layers"]):
            raise CheckpointFormatError(f"{path}: vae checkpoint needs meta.encoder_layers")
        enc = _build_net(doc["layers"][:n_enc], doc["weights"])
        dec = _build_net(doc["layers"][n_enc:], doc["weights"], offset=n_enc)
        return VaeModel(encoder=enc, decoder=dec,
                        obs_sigma=float(meta.get("obs_sigma", 0.1)), meta=meta)
    raise CheckpointFormatError(f"{path}: unknown kind {kind!r}")
