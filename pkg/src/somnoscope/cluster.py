"""Gaussian mixture clustering of event latents (diagonal covariance EM)."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .serialize import load_container, save_container

VARIANCE_FLOOR = 1e-6
EM_MAX_ITER = 200
EM_REL_TOL = 1e-6
KMEANS_STEPS = 10


class ClusterError(RuntimeError):
    pass


@dataclass
class GmmModel:
    weights: np.ndarray  # (K,), simplex
    means: np.ndarray  # (K, d)
    variances: np.ndarray  # (K, d), diagonal, floored

    @property
    def n_clusters(self) -> int:
        return len(self.weights)


def _kmeans_pp_init(X, K, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min([np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        if d2.sum() <= 0:
            centers.append(X[rng.integers(n)])
            continue
        centers.append(X[rng.choice(n, p=d2 / d2.sum())])
    return np.array(centers)


def _log_densities(X, model: GmmModel):
    """(n, K) joint log densities log pi_k + log N(x; mu_k, diag var_k)."""
    diff = X[:, None, :] - model.means[None, :, :]  # (n, K, d)
    quad = np.sum(diff**2 / model.variances[None, :, :], axis=2)
    logdet = np.sum(np.log(model.variances), axis=1)
    d = X.shape[1]
    return np.log(model.weights)[None, :] - 0.5 * (quad + logdet + d * np.log(2 * np.pi))


def fit_gmm(latents, K: int, seed: int = 0):
    """EM fit with k-means++ seeding; returns (model, log-likelihood history)."""
    X = np.asarray(latents, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(np.unique(X, axis=0)) < K:
        raise ClusterError(f"need at least {K} distinct latents")
    rng = np.random.default_rng(seed)

    means = _kmeans_pp_init(X, K, rng)
    for _ in range(KMEANS_STEPS):
        assign = np.argmin(((X[:, None, :] - means[None, :, :]) ** 2).sum(axis=2), axis=1)
        for k in range(K):
            if np.any(assign == k):
                means[k] = X[assign == k].mean(axis=0)

    global_var = np.maximum(X.var(axis=0), VARIANCE_FLOOR)
    model = GmmModel(
        weights=np.full(K, 1.0 / K),
        means=means,
        variances=np.tile(global_var, (K, 1)),
    )

    history = []
    for _ in range(EM_MAX_ITER):
        logj = _log_densities(X, model)
        m = logj.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logj - m).sum(axis=1))
        ll = float(lse.sum())
        resp = np.exp(logj - lse[:, None])

        nk = resp.sum(axis=0)
        model.weights = nk / nk.sum()
        model.means = (resp.T @ X) / nk[:, None]
        diff2 = (X[:, None, :] - model.means[None, :, :]) ** 2
        var = np.einsum("nk,nkd->kd", resp, diff2) / nk[:, None]
        model.variances = np.maximum(var, VARIANCE_FLOOR)

        if history and abs(ll - history[-1]) < EM_REL_TOL * abs(history[-1]):
            history.append(ll)
            break
        history.append(ll)
    return model, history


def responsibilities(model: GmmModel, z) -> np.ndarray:
    """Cluster membership probabilities for one latent (or a batch)."""
    Z = np.atleast_2d(np.asarray(z, dtype=float))
    logj = _log_densities(Z, model)
    logj -= logj.max(axis=1, keepdims=True)
    p = np.exp(logj)
    p /= p.sum(axis=1, keepdims=True)
    return p if np.asarray(z).ndim > 1 else p[0]


def export_latents(latents, posteriors, path) -> None:
    """CSV of latent components, argmax cluster, and membership probabilities."""
    latents = np.atleast_2d(np.asarray(latents, dtype=float)) if len(latents) else np.zeros((0, 0))
    posteriors = (
        np.atleast_2d(np.asarray(posteriors, dtype=float)) if len(posteriors) else np.zeros((0, 0))
    )
    if len(latents) != len(posteriors):
        raise ClusterError("latents/posteriors length mismatch")
    d = latents.shape[1]
    K = posteriors.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"z{j}" for j in range(d)] + ["cluster"] + [f"p{k}" for k in range(K)])
        for z, p in zip(latents, posteriors):
            # ties break toward the lowest cluster index (np.argmax convention)
            w.writerow([repr(v) for v in z] + [int(np.argmax(p))] + [repr(v) for v in p])


def save_gmm(path, model: GmmModel) -> None:
    save_container(
        path,
        "gmm",
        {"n_clusters": model.n_clusters},
        {"weights": model.weights, "means": model.means, "variances": model.variances},
    )


def load_gmm(path) -> GmmModel:
    _, _, arrays = load_container(path, expect_kind="gmm")
    return GmmModel(weights=arrays["weights"], means=arrays["means"], variances=arrays["variances"])
