"""Variational autoencoder over normalized power spectra.

The reconstruction term is the KL divergence between the input spectrum
(a point on the probability simplex) and the decoded spectrum, which the
decoder keeps strictly inside the simplex via an exponential-normalize
output map. Event embeddings are the encoder mean only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import Adam
from .serialize import load_container, save_container

LOGVAR_CLAMP = 10.0  # |log variance| bound, prevents collapse/overflow


class VaeError(RuntimeError):
    pass


@dataclass(frozen=True)
class VaeConfig:
    input_dim: int = 2400
    hidden_dims: tuple = (512,)
    latent_dim: int = 20
    kl_weight: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise VaeError("latent_dim must be >= 1")
        if self.learning_rate < 0:
            raise VaeError("learning_rate must be >= 0")
        if self.kl_weight < 0:
            raise VaeError("kl_weight must be >= 0")


@dataclass
class VaeModel:
    config: VaeConfig
    params: dict = field(default_factory=dict)


def reconstruction_kld(x, xhat) -> float:
    """KL divergence sum_i x_i ln(x_i / xhat_i), averaged over a batch."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    if np.any(x <= 0) or np.any(xhat <= 0):
        raise VaeError("KLD needs strictly positive inputs")
    return float(np.sum(x * (np.log(x) - np.log(xhat))) / len(x))


def gaussian_prior_kl(mu, logvar) -> float:
    """Closed-form KL(N(mu, exp(logvar)) || N(0, I)), averaged over a batch."""
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    logvar = np.atleast_2d(np.asarray(logvar, dtype=float))
    return float(0.5 * np.sum(mu**2 + np.exp(logvar) - 1.0 - logvar) / len(mu))


def _fan_in_uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_vae(config: VaeConfig) -> VaeModel:
    rng = np.random.default_rng(config.seed)
    p = {}
    dims = [config.input_dim, *config.hidden_dims]
    for i in range(len(dims) - 1):
        p[f"enc_W{i}"] = _fan_in_uniform(rng, dims[i], (dims[i], dims[i + 1]))
        p[f"enc_b{i}"] = np.zeros(dims[i + 1])
    h = dims[-1]
    p["W_mu"] = _fan_in_uniform(rng, h, (h, config.latent_dim))
    p["b_mu"] = np.zeros(config.latent_dim)
    p["W_lv"] = _fan_in_uniform(rng, h, (h, config.latent_dim))
    p["b_lv"] = np.zeros(config.latent_dim)
    ddims = [config.latent_dim, *reversed(config.hidden_dims)]
    for i in range(len(ddims) - 1):
        p[f"dec_W{i}"] = _fan_in_uniform(rng, ddims[i], (ddims[i], ddims[i + 1]))
        p[f"dec_b{i}"] = np.zeros(ddims[i + 1])
    p["W_out"] = _fan_in_uniform(rng, ddims[-1], (ddims[-1], config.input_dim))
    p["b_out"] = np.zeros(config.input_dim)
    return VaeModel(config=config, params=p)


def _encode_forward(model, X):
    p = model.params
    hs = []
    h = X
    for i in range(len(model.config.hidden_dims)):
        h = np.tanh(h @ p[f"enc_W{i}"] + p[f"enc_b{i}"])
        hs.append(h)
    mu = h @ p["W_mu"] + p["b_mu"]
    lv_raw = h @ p["W_lv"] + p["b_lv"]
    lv = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return mu, lv, lv_raw, hs


def _decode_forward(model, Z):
    p = model.params
    gs = []
    g = Z
    for i in range(len(model.config.hidden_dims)):
        g = np.tanh(g @ p[f"dec_W{i}"] + p[f"dec_b{i}"])
        gs.append(g)
    logits = g @ p["W_out"] + p["b_out"]
    logits = logits - logits.max(axis=-1, keepdims=True)
    xhat = np.exp(logits)
    xhat /= xhat.sum(axis=-1, keepdims=True)
    return xhat, gs


def decode(model: VaeModel, Z) -> np.ndarray:
    """Map latents to simplex-valued spectra."""
    xhat, _ = _decode_forward(model, np.atleast_2d(np.asarray(Z, dtype=float)))
    return xhat if np.asarray(Z).ndim > 1 else xhat[0]


def _loss_and_grads(model, X, eps):
    """Total/reconstruction/latent losses (per-sample means) and parameter grads."""
    cfg = model.config
    p = model.params
    B = len(X)
    beta = cfg.kl_weight

    mu, lv, lv_raw, hs = _encode_forward(model, X)
    sigma = np.exp(0.5 * lv)
    Z = mu + sigma * eps
    xhat, gs = _decode_forward(model, Z)

    recon = reconstruction_kld(X, xhat)
    latent_kl = gaussian_prior_kl(mu, lv)
    total = recon + beta * latent_kl

    grads = {}
    # decoder backward
    dlogits = (xhat - X) / B
    dg = dlogits
    grads["W_out"] = gs[-1].T @ dlogits if gs else Z.T @ dlogits
    grads["b_out"] = dlogits.sum(axis=0)
    upstream = dlogits @ p["W_out"].T
    for i in reversed(range(len(cfg.hidden_dims))):
        dpre = upstream * (1.0 - gs[i] ** 2)
        below = gs[i - 1] if i > 0 else Z
        grads[f"dec_W{i}"] = below.T @ dpre
        grads[f"dec_b{i}"] = dpre.sum(axis=0)
        upstream = dpre @ p[f"dec_W{i}"].T
    dZ = upstream

    # latent heads
    dmu = dZ + beta * mu / B
    clamp_mask = (np.abs(lv_raw) < LOGVAR_CLAMP).astype(float)
    dlv = (dZ * eps * 0.5 * sigma + beta * 0.5 * (np.exp(lv) - 1.0) / B) * clamp_mask
    h_top = hs[-1] if hs else X
    grads["W_mu"] = h_top.T @ dmu
    grads["b_mu"] = dmu.sum(axis=0)
    grads["W_lv"] = h_top.T @ dlv
    grads["b_lv"] = dlv.sum(axis=0)

    upstream = dmu @ p["W_mu"].T + dlv @ p["W_lv"].T
    for i in reversed(range(len(cfg.hidden_dims))):
        dpre = upstream * (1.0 - hs[i] ** 2)
        below = hs[i - 1] if i > 0 else X
        grads[f"enc_W{i}"] = below.T @ dpre
        grads[f"enc_b{i}"] = dpre.sum(axis=0)
        upstream = dpre @ p[f"enc_W{i}"].T
    return total, recon, latent_kl, grads


def vae_loss(model: VaeModel, X, rng) -> tuple[float, float, float]:
    """(total, reconstruction KLD, latent KL) with one reparameterized sample."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.any(X <= 0):
        raise VaeError("spectra must be strictly positive")
    eps = rng.standard_normal((len(X), model.config.latent_dim))
    total, recon, kl, _ = _loss_and_grads(model, X, eps)
    return total, recon, kl


def train_vae(model: VaeModel, data, config: VaeConfig | None = None):
    """Adam training over full passes; returns (model, per-epoch mean loss)."""
    cfg = config or model.config
    X = np.asarray(data, dtype=float)
    if len(X) < cfg.batch_size:
        raise VaeError(f"need at least batch_size={cfg.batch_size} spectra")
    if np.any(X <= 0):
        raise VaeError("spectra must be strictly positive")

    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.learning_rate)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(X))
        epoch_loss = 0.0
        for lo in range(0, len(X), cfg.batch_size):
            batch = X[order[lo : lo + cfg.batch_size]]
            eps = rng.standard_normal((len(batch), cfg.latent_dim))
            total, _, _, grads = _loss_and_grads(model, batch, eps)
            if not np.isfinite(total):
                raise VaeError(f"non-finite loss {total} during training")
            opt.step(model.params, grads)
            epoch_loss += total * len(batch)
        history.append(epoch_loss / len(X))
    return model, history


def encode(model: VaeModel, x) -> np.ndarray:
    """Deterministic event embedding: the encoder mean, no sampling."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    mu, _, _, _ = _encode_forward(model, X)
    return mu if np.asarray(x).ndim > 1 else mu[0]


def save_vae(path, model: VaeModel) -> None:
    cfg = model.config
    save_container(
        path,
        "vae",
        {
            "input_dim": cfg.input_dim,
            "hidden_dims": list(cfg.hidden_dims),
            "latent_dim": cfg.latent_dim,
            "kl_weight": cfg.kl_weight,
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "seed": cfg.seed,
        },
        model.params,
    )


def load_vae(path) -> VaeModel:
    _, cfg, arrays = load_container(path, expect_kind="vae")
    cfg["hidden_dims"] = tuple(cfg["hidden_dims"])
    return VaeModel(config=VaeConfig(**cfg), params=arrays)
