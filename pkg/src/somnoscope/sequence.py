"""Per-night event sequences, order-preserving subsampling, augmentation, folds."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


class SequenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class NightSequence:
    night_id: str
    events: np.ndarray  # (l, dim): cluster posteriors (proposed) or latents (baseline)
    label: str

    def __post_init__(self):
        if len(self.events) < 1:
            raise SequenceError(f"night {self.night_id} has no events")

    @property
    def length(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class AugmentConfig:
    sample_size: int  # events kept per sampled sequence
    factor: int  # sequences generated per night
    seed: int = 0

    def __post_init__(self):
        if self.sample_size < 1 or self.factor < 1:
            raise SequenceError("sample_size and factor must be >= 1")


def _night_rng(seed: int, night_id: str) -> np.random.Generator:
    # independent, reproducible stream per night regardless of processing order
    return np.random.default_rng(np.random.SeedSequence((seed, zlib.crc32(night_id.encode()))))


def assemble_nights(posteriors_by_night: dict, labels) -> list[NightSequence]:
    """Build labeled per-night sequences; events ordered by index_in_night.

    posteriors_by_night maps night_id -> list of (index_in_night, vector).
    Nights without a label are dropped.
    """
    label_map = {lab.night_id: lab.satisfaction for lab in labels}
    nights = []
    for night_id in sorted(posteriors_by_night):
        if night_id not in label_map:
            continue
        entries = sorted(posteriors_by_night[night_id], key=lambda e: e[0])
        indices = [i for i, _ in entries]
        if len(set(indices)) != len(indices):
            raise SequenceError(f"night {night_id}: duplicate event indices")
        events = np.asarray([np.asarray(v, dtype=float) for _, v in entries])
        nights.append(NightSequence(night_id=night_id, events=events, label=label_map[night_id]))
    return nights


def subsample(night: NightSequence, n: int, rng) -> NightSequence:
    """Uniform random n-subset of events, kept in original order."""
    if n < 1:
        raise SequenceError("n must be >= 1")
    l = night.length
    if n >= l:
        return night
    keep = np.sort(rng.choice(l, size=n, replace=False))
    return NightSequence(night_id=night.night_id, events=night.events[keep], label=night.label)


def augment(nights, config: AugmentConfig) -> list[NightSequence]:
    """factor subsampled sequences per night; duplicates among them are allowed."""
    out = []
    for night in nights:
        rng = _night_rng(config.seed, night.night_id)
        for _ in range(config.factor):
            out.append(subsample(night, config.sample_size, rng))
    return out


def make_folds(nights, k: int = 4, repeats: int = 5, seed: int = 0):
    """Seeded random partitions of nights, stratified by label where possible.

    Returns k * repeats (train, test) pairs; within each repeat the test folds
    are disjoint and cover all nights.
    """
    if len(nights) < k:
        raise SequenceError(f"need at least {k} nights for {k} folds")
    splits = []
    for rep in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence((seed, rep)))
        by_label: dict[str, list] = {}
        for night in nights:
            by_label.setdefault(night.label, []).append(night)
        ordered = []
        for label in sorted(by_label):
            group = by_label[label]
            ordered.extend(group[i] for i in rng.permutation(len(group)))
        folds = [[] for _ in range(k)]
        for i, night in enumerate(ordered):
            folds[i % k].append(night)
        for f in range(k):
            test = folds[f]
            train = [n for g in range(k) if g != f for n in folds[g]]
            splits.append((train, test))
    return splits


def segment_thirds(night: NightSequence):
    """Contiguous early/middle/late thirds; remainder events go earliest-first."""
    l = night.length
    if l < 3:
        raise SequenceError("need at least 3 events to segment")
    base, rem = divmod(l, 3)
    lengths = [base + (1 if i < rem else 0) for i in range(3)]
    parts = []
    start = 0
    for length in lengths:
        parts.append(
            NightSequence(
                night_id=night.night_id,
                events=night.events[start : start + length],
                label=night.label,
            )
        )
        start += length
    return tuple(parts)
