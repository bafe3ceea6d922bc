"""Seq-to-one LSTM satisfaction classifier (single layer, numpy, manual BPTT).

Consumes per-event vectors (cluster posteriors, or raw latents for the
conventional baseline), runs one LSTM layer over the sequence, and maps the
final hidden state through dropout + affine + sigmoid to a probability of
the "satisfied" label. Trained with Adam on binary cross-entropy.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .ingest import SATISFIED
from .optim import Adam
from .sequence import subsample
from .serialize import load_container, save_container


class LstmError(RuntimeError):
    pass


@dataclass(frozen=True)
class LstmConfig:
    input_dim: int
    hidden: int = 50
    dropout: float = 0.2
    learning_rate: float = 0.001
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    grad_clip: float | None = None  # max grad norm; off by default

    def __post_init__(self):
        if not 0 <= self.dropout < 1:
            raise LstmError("dropout must be in [0, 1)")


@dataclass
class LstmModel:
    config: LstmConfig
    params: dict = field(default_factory=dict)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def init_lstm(config: LstmConfig) -> LstmModel:
    rng = np.random.default_rng(config.seed)
    D, H = config.input_dim, config.hidden

    def u(fan_in, shape):
        b = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-b, b, size=shape)

    p = {
        "Wx": u(D, (D, 4 * H)),
        "Wh": u(H, (H, 4 * H)),
        "b": np.zeros(4 * H),
        "W_out": u(H, (H,)),
        "b_out": np.zeros(1),
    }
    p["b"][H : 2 * H] = 1.0  # forget-gate bias
    return LstmModel(config=config, params=p)


def _forward_batch(model, X, train_mode=False, rng=None, cache=None):
    """Probabilities for a (B, T, D) batch; fills cache for BPTT if given."""
    p = model.params
    cfg = model.config
    B, T, _ = X.shape
    H = cfg.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        a = X[:, t, :] @ p["Wx"] + h @ p["Wh"] + p["b"]
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c_prev = c
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        if cache is not None:
            cache.append((i, f, g, o, c_prev, tc, h))
    if train_mode and cfg.dropout > 0:
        if rng is None:
            raise LstmError("train-mode forward needs an rng for dropout")
        mask = (rng.random((B, H)) >= cfg.dropout) / (1.0 - cfg.dropout)
    else:
        mask = np.ones((B, H))
    h_drop = h * mask
    prob = _sigmoid(h_drop @ p["W_out"] + p["b_out"])
    if cache is not None:
        cache.append(mask)
    return prob


def lstm_forward(model: LstmModel, seq, train_mode: bool = False, rng=None) -> float:
    """Probability of the positive (satisfied) label for one sequence."""
    X = np.asarray(seq, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.config.input_dim:
        raise LstmError(f"expected (T, {model.config.input_dim}) sequence, got {X.shape}")
    if len(X) == 0:
        raise LstmError("empty sequence")
    return float(_forward_batch(model, X[None], train_mode=train_mode, rng=rng)[0])


def _batch_loss_and_grads(model, X, y, rng=None, train_mode=True):
    """Mean BCE over an equal-length batch plus gradients for every parameter."""
    p = model.params
    cfg = model.config
    B, T, _ = X.shape
    H = cfg.hidden
    cache: list = []
    prob = _forward_batch(model, X, train_mode=train_mode, rng=rng, cache=cache)
    mask = cache.pop()
    eps = 1e-12
    loss = float(-np.mean(y * np.log(prob + eps) + (1 - y) * np.log(1 - prob + eps)))

    grads = {k: np.zeros_like(v) for k, v in p.items()}
    ds = (prob - y) / B  # sigmoid + BCE
    h_T = cache[-1][6]
    grads["W_out"] = (h_T * mask).T @ ds
    grads["b_out"] = np.array([ds.sum()])
    dh = (ds[:, None] * p["W_out"][None, :]) * mask
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i, f, g, o, c_prev, tc, _ = cache[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc**2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        da = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)], axis=1
        )
        grads["Wx"] += X[:, t, :].T @ da
        grads["b"] += da.sum(axis=0)
        h_prev = cache[t - 1][6] if t > 0 else np.zeros((B, H))
        grads["Wh"] += h_prev.T @ da
        dh = da @ p["Wh"].T
        dc = dc * f
    return loss, grads


def _label_value(label) -> float:
    if isinstance(label, str):
        return 1.0 if label == SATISFIED else 0.0
    return float(label)


def _length_batches(lengths, order, batch_size):
    """Partition shuffled indices into equal-length batches."""
    buckets: dict[int, list[int]] = {}
    for idx in order:
        buckets.setdefault(lengths[idx], []).append(idx)
    batches = []
    for length in sorted(buckets):
        bucket = buckets[length]
        for lo in range(0, len(bucket), batch_size):
            batches.append(bucket[lo : lo + batch_size])
    return batches


def train_lstm(model: LstmModel, train_set, config: LstmConfig | None = None):
    """Adam/BCE training over full sequences; returns (model, per-epoch loss).

    train_set entries are NightSequence-like objects (events, label).
    """
    cfg = config or model.config
    seqs = [np.asarray(s.events, dtype=float) for s in train_set]
    labels = np.array([_label_value(s.label) for s in train_set])
    if len(set(labels)) < 2:
        raise LstmError("training data must contain both labels")
    lengths = [len(s) for s in seqs]

    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.learning_rate)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(seqs))
        batches = _length_batches(lengths, order, cfg.batch_size)
        batch_order = rng.permutation(len(batches))
        epoch_loss = 0.0
        for bi in batch_order:
            idx = batches[bi]
            X = np.stack([seqs[j] for j in idx])
            y = labels[idx]
            loss, grads = _batch_loss_and_grads(model, X, y, rng=rng)
            if not np.isfinite(loss):
                raise LstmError(f"non-finite loss {loss} during training")
            if cfg.grad_clip is not None:
                norm = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
                if norm > cfg.grad_clip:
                    scale = cfg.grad_clip / norm
                    grads = {k: g * scale for k, g in grads.items()}
            opt.step(model.params, grads)
            epoch_loss += loss * len(idx)
        history.append(epoch_loss / len(seqs))
    return model, history


def evaluate(model: LstmModel, test_set, sample_size: int | None = None, eval_seed: int = 0) -> float:
    """Accuracy with threshold 0.5; one fixed-seed subsample per test night."""
    if not test_set:
        raise LstmError("empty test set")
    correct = 0
    for night in test_set:
        seq = night
        if sample_size is not None:
            rng = np.random.default_rng(
                np.random.SeedSequence((eval_seed, zlib.crc32(night.night_id.encode())))
            )
            seq = subsample(night, sample_size, rng)
        prob = lstm_forward(model, seq.events)
        pred = 1.0 if prob >= 0.5 else 0.0
        correct += pred == _label_value(night.label)
    return correct / len(test_set)


def save_lstm(path, model: LstmModel) -> None:
    cfg = model.config
    save_container(
        path,
        "lstm",
        {
            "input_dim": cfg.input_dim,
            "hidden": cfg.hidden,
            "dropout": cfg.dropout,
            "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "grad_clip": cfg.grad_clip,
        },
        model.params,
    )


def load_lstm(path) -> LstmModel:
    _, cfg, arrays = load_container(path, expect_kind="lstm")
    return LstmModel(config=LstmConfig(**cfg), params=arrays)
