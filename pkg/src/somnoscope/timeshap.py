"""Shapley-value explanation of the trained sequence classifier.

Players are either cluster dimensions (feature mode) or events (event mode);
deactivated players are replaced by a baseline event. Includes an exact
enumeration oracle, a kernel-weighted regression estimator, temporal prefix
pruning into a single grouped player, and per-label / per-segment analyses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .lstm import LstmConfig, _forward_batch, init_lstm, train_lstm
from .sequence import augment, segment_thirds

EXACT_PLAYER_LIMIT = 12
_CHUNK = 1024


class ShapError(RuntimeError):
    pass


@dataclass
class ShapReport:
    values: np.ndarray  # per-player Shapley values
    base_value: float  # f(empty coalition)
    prediction: float  # f(full coalition)
    pruned_coalition_value: float = 0.0
    prune_index: int = 0
    player_names: list = field(default_factory=list)

    def efficiency_gap(self) -> float:
        total = float(self.values.sum()) + self.pruned_coalition_value
        return abs(total - (self.prediction - self.base_value))

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "player_names": list(self.player_names),
            "base_value": self.base_value,
            "prediction": self.prediction,
            "pruned_coalition_value": self.pruned_coalition_value,
            "prune_index": self.prune_index,
        }


def baseline_event(K: int) -> np.ndarray:
    """Uniform posterior used in place of deactivated players."""
    if K < 1:
        raise ShapError("need K >= 1")
    return np.full(K, 1.0 / K)


def _n_players(events: np.ndarray, mode: str, prune_index: int) -> int:
    if mode == "feature":
        return events.shape[1]
    n = len(events) - prune_index
    return n + (1 if prune_index > 0 else 0)


def _perturb(events: np.ndarray, mask: np.ndarray, mode: str, baseline, prune_index: int):
    """Apply one coalition mask; returns a perturbed copy of the sequence."""
    if mode == "feature":
        out = np.where(mask[None, :], events, baseline[None, :])
        return out / out.sum(axis=1, keepdims=True)
    out = events.copy()
    if prune_index > 0:
        if not mask[0]:
            out[:prune_index] = baseline
        event_mask = mask[1:]
    else:
        event_mask = mask
    out[prune_index:][~event_mask] = baseline
    return out


def _batch_values(model, events, masks, mode, baseline, prune_index):
    """Model probabilities for many coalitions via chunked batched forwards."""
    values = np.empty(len(masks))
    for lo in range(0, len(masks), _CHUNK):
        chunk = masks[lo : lo + _CHUNK]
        X = np.stack([_perturb(events, m, mode, baseline, prune_index) for m in chunk])
        values[lo : lo + len(chunk)] = _forward_batch(model, X)
    return values


def coalition_value(model, seq, coalition, mode: str, baseline=None, prune_index: int = 0) -> float:
    """Model probability on the sequence with non-coalition players baselined."""
    events = np.asarray(seq.events, dtype=float)
    if baseline is None:
        baseline = baseline_event(events.shape[1])
    M = _n_players(events, mode, prune_index)
    mask = np.zeros(M, dtype=bool)
    for i in coalition:
        mask[i] = True
    return float(_batch_values(model, events, mask[None], mode, baseline, prune_index)[0])


def _all_masks(M: int) -> np.ndarray:
    codes = np.arange(2**M, dtype=np.uint32)
    return (codes[:, None] >> np.arange(M)[None, :]) & 1 == 1


def _report_from_phis(phis, base, full, mode, prune_index):
    if mode == "event" and prune_index > 0:
        return ShapReport(
            values=phis[1:],
            base_value=base,
            prediction=full,
            pruned_coalition_value=float(phis[0]),
            prune_index=prune_index,
            player_names=["pruned"] + [f"event_{prune_index + j}" for j in range(len(phis) - 1)],
        )
    names = (
        [f"cluster_{k}" for k in range(len(phis))]
        if mode == "feature"
        else [f"event_{j}" for j in range(len(phis))]
    )
    return ShapReport(values=phis, base_value=base, prediction=full, player_names=names)


def exact_shapley(model, seq, mode: str, baseline=None, prune_index: int = 0) -> ShapReport:
    """Shapley values by full coalition enumeration (player count <= 12)."""
    events = np.asarray(seq.events, dtype=float)
    if baseline is None:
        baseline = baseline_event(events.shape[1])
    M = _n_players(events, mode, prune_index)
    if M > EXACT_PLAYER_LIMIT:
        raise ShapError(f"{M} players exceed the enumeration limit {EXACT_PLAYER_LIMIT}")
    masks = _all_masks(M)
    v = _batch_values(model, events, masks, mode, baseline, prune_index)

    sizes = masks.sum(axis=1)
    fact = np.array([factorial(s) for s in range(M + 1)], dtype=float)
    phis = np.zeros(M)
    for i in range(M):
        without = ~masks[:, i]
        s = sizes[without]
        w = fact[s] * fact[M - s - 1] / fact[M]
        gain = v[np.flatnonzero(without) | (1 << i)] - v[without]
        phis[i] = float(np.sum(w * gain))
    base, full = float(v[0]), float(v[-1])
    return _report_from_phis(phis, base, full, mode, prune_index)


def _kernel_size_weights(M: int) -> np.ndarray:
    sizes = np.arange(1, M)
    return (M - 1) / (sizes * (M - sizes))


def kernel_shap(
    model, seq, mode: str, n_samples: int, rng, baseline=None, prune_index: int = 0
) -> ShapReport:
    """Shapley estimates by kernel-weighted least squares over sampled coalitions.

    The full and empty coalitions are always evaluated and the efficiency
    identity is enforced as an equality constraint, so it holds exactly.
    When n_samples covers all coalitions, enumeration with exact kernel
    weights is used instead of sampling.
    """
    events = np.asarray(seq.events, dtype=float)
    if baseline is None:
        baseline = baseline_event(events.shape[1])
    M = _n_players(events, mode, prune_index)
    if n_samples < 2 * M + 2:
        raise ShapError(f"need n_samples >= {2 * M + 2} for {M} players")

    base = float(_batch_values(model, events, np.zeros((1, M), dtype=bool), mode, baseline, prune_index)[0])
    full = float(_batch_values(model, events, np.ones((1, M), dtype=bool), mode, baseline, prune_index)[0])
    delta = full - base
    if M == 1:
        return _report_from_phis(np.array([delta]), base, full, mode, prune_index)

    if n_samples >= 2**M:
        masks = _all_masks(M)
        proper = masks[(masks.sum(axis=1) > 0) & (masks.sum(axis=1) < M)]
        sizes = proper.sum(axis=1)
        weights = (M - 1) / (np.array([comb(M, s) for s in sizes]) * sizes * (M - sizes))
    else:
        size_p = _kernel_size_weights(M)
        size_p = size_p / size_p.sum()
        sizes = rng.choice(np.arange(1, M), size=n_samples - 2, p=size_p)
        proper = np.zeros((len(sizes), M), dtype=bool)
        for j, s in enumerate(sizes):
            proper[j, rng.choice(M, size=s, replace=False)] = True
        weights = np.ones(len(proper))  # sampling distribution already carries the kernel

    v = _batch_values(model, events, proper, mode, baseline, prune_index)

    # eliminate the last player through the efficiency constraint
    Z = proper.astype(float)
    A = Z[:, :-1] - Z[:, -1:]
    y = v - base - Z[:, -1] * delta
    sw = np.sqrt(weights)[:, None]
    Aw, yw = A * sw, y * sw[:, 0]
    AtA = Aw.T @ Aw
    if np.linalg.matrix_rank(AtA) < M - 1:
        raise ShapError("singular regression system; increase n_samples")
    phi_head = np.linalg.solve(AtA, Aw.T @ yw)
    phis = np.concatenate([phi_head, [delta - phi_head.sum()]])
    return _report_from_phis(phis, base, full, mode, prune_index)


def prune_events(model, seq, eta: float, baseline=None) -> int:
    """Longest prefix whose two-player Shapley value stays below eta."""
    if eta < 0:
        raise ShapError("eta must be >= 0")
    events = np.asarray(seq.events, dtype=float)
    if baseline is None:
        baseline = baseline_event(events.shape[1])
    l = len(events)
    if l < 2 or eta == 0:
        return 0

    # coalitions: empty, full, then (prefix-only, suffix-only) per split point
    masks = np.zeros((2 + 2 * (l - 1), l), dtype=bool)
    masks[1] = True
    for t in range(1, l):
        masks[2 * t, :t] = True
        masks[2 * t + 1, t:] = True
    v = _batch_values(model, events, masks, "event", baseline, 0)
    v_empty, v_full = v[0], v[1]

    best = 0
    for t in range(1, l):
        phi_prefix = 0.5 * ((v[2 * t] - v_empty) + (v_full - v[2 * t + 1]))
        if abs(phi_prefix) < eta:
            best = t
    return best


def _single_report(model, seq, mode, n_samples, rng, baseline, prune_index=0):
    M = _n_players(np.asarray(seq.events), mode, prune_index)
    if M <= EXACT_PLAYER_LIMIT and (n_samples is None or n_samples >= 2**M):
        return exact_shapley(model, seq, mode, baseline=baseline, prune_index=prune_index)
    return kernel_shap(
        model, seq, mode, n_samples or 4 * M + 64, rng, baseline=baseline, prune_index=prune_index
    )


def explain_satisfaction(model, nights, mode: str = "feature", n_samples=None, seed: int = 0, baseline=None):
    """Per-cluster values averaged over satisfied and unsatisfied nights.

    Returns (aggregates, per_night): each maps the label to a ShapReport or a
    list of per-night ShapReports.
    """
    if not nights:
        raise ShapError("no nights to explain")
    rng = np.random.default_rng(seed)
    per_night: dict[str, list[ShapReport]] = {}
    for night in nights:
        report = _single_report(model, night, mode, n_samples, rng, baseline)
        per_night.setdefault(night.label, []).append(report)

    aggregates = {}
    for label, reports in per_night.items():
        aggregates[label] = ShapReport(
            values=np.mean([r.values for r in reports], axis=0),
            base_value=float(np.mean([r.base_value for r in reports])),
            prediction=float(np.mean([r.prediction for r in reports])),
            pruned_coalition_value=float(np.mean([r.pruned_coalition_value for r in reports])),
            player_names=reports[0].player_names,
        )
    return aggregates, per_night


def explain_segments(
    nights,
    lstm_config: LstmConfig,
    augment_config=None,
    mode: str = "feature",
    n_samples=None,
    seed: int = 0,
):
    """Early/middle/late analysis: one LSTM per segment, each explained.

    Returns {"early"|"middle"|"late": (aggregates, per_night)}.
    """
    segmented = [segment_thirds(n) for n in nights]
    out = {}
    for si, name in enumerate(("early", "middle", "late")):
        segs = [parts[si] for parts in segmented]
        train_set = augment(segs, augment_config) if augment_config is not None else segs
        seg_model = init_lstm(lstm_config)
        seg_model, _ = train_lstm(seg_model, train_set)
        out[name] = explain_satisfaction(seg_model, segs, mode=mode, n_samples=n_samples, seed=seed)
    return out
