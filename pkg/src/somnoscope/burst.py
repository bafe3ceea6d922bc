"""Sound-event extraction via a two-state burst model on amplitude variance.

Frames are labeled by a minimum-cost path through two zero-mean Gaussian
states: stationary noise N(0, s0_var) and burst N(0, ratio * s0_var).
Entering the burst state costs ``gamma * ln(n_frames)``; maximal burst runs
long enough become event spans, and nearby spans are merged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE_QUANTILE = 0.2  # low quantile of per-frame variances, robust to bursts


class BurstError(RuntimeError):
    pass


@dataclass(frozen=True)
class BurstParams:
    frame_len: int = 2400  # 50 ms at 48 kHz
    hop: int = 2400
    variance_ratio: float = 2.0  # burst-state variance multiplier, > 1
    transition_cost: float = 1.0  # gamma, scales ln(n_frames) per noise->burst entry
    min_event_frames: int = 2
    merge_gap: float = 0.5  # seconds

    def __post_init__(self):
        if self.variance_ratio <= 1:
            raise BurstError("variance_ratio must exceed 1")
        if self.transition_cost < 0:
            raise BurstError("transition_cost must be >= 0")
        if not (self.frame_len >= self.hop > 0):
            raise BurstError("need frame_len >= hop > 0")
        if self.merge_gap < 0:
            raise BurstError("merge_gap must be >= 0")


@dataclass(frozen=True)
class EventSpan:
    start: float  # seconds
    end: float
    night_id: str = ""

    def __post_init__(self):
        if self.end <= self.start:
            raise BurstError(f"empty span [{self.start}, {self.end}]")


@dataclass(frozen=True)
class SoundEvent:
    span: EventSpan
    samples: np.ndarray
    index_in_night: int


def frame_variances(samples: np.ndarray, params: BurstParams) -> np.ndarray:
    """Per-frame sample variance (about the frame mean); drops the tail remainder."""
    n_frames = 1 + (len(samples) - params.frame_len) // params.hop
    if n_frames < 1:
        raise BurstError("recording shorter than one frame")
    idx = np.arange(params.frame_len)[None, :] + params.hop * np.arange(n_frames)[:, None]
    frames = samples[idx]
    return frames.var(axis=1)


def estimate_noise_floor(recording, params: BurstParams) -> float:
    var = frame_variances(recording.samples, params)
    if len(var) < 100:
        raise BurstError(f"need >= 100 frames, got {len(var)}")
    floor = float(np.quantile(var, NOISE_QUANTILE))
    if floor <= 0:
        raise BurstError("no positive frame variance (silent or constant audio)")
    return floor


def _viterbi_burst_path(frame_ss, frame_n, noise_var, params: BurstParams) -> np.ndarray:
    """Minimum-cost 0/1 state path; emission cost is the frame's Gaussian NLL."""
    n_frames = len(frame_ss)
    variances = np.array([noise_var, params.variance_ratio * noise_var])
    # emission[t, k]: NLL of frame t under state k
    emission = 0.5 * frame_ss[:, None] / variances[None, :] + 0.5 * frame_n[:, None] * np.log(
        2.0 * np.pi * variances[None, :]
    )
    enter_cost = params.transition_cost * np.log(n_frames)

    cost = np.empty((n_frames, 2))
    back = np.zeros((n_frames, 2), dtype=np.int8)
    cost[0, 0] = emission[0, 0]
    cost[0, 1] = emission[0, 1] + enter_cost  # starting in burst counts as an entry
    for t in range(1, n_frames):
        stay0, leave1 = cost[t - 1, 0], cost[t - 1, 1]
        # into state 0: free from either state
        if stay0 <= leave1:
            cost[t, 0], back[t, 0] = stay0 + emission[t, 0], 0
        else:
            cost[t, 0], back[t, 0] = leave1 + emission[t, 0], 1
        # into state 1: pay enter_cost only when coming from state 0
        from0 = stay0 + enter_cost
        if from0 < leave1:
            cost[t, 1], back[t, 1] = from0 + emission[t, 1], 0
        else:
            cost[t, 1], back[t, 1] = leave1 + emission[t, 1], 1

    states = np.empty(n_frames, dtype=np.int8)
    states[-1] = 0 if cost[-1, 0] <= cost[-1, 1] else 1
    for t in range(n_frames - 1, 0, -1):
        states[t - 1] = back[t, states[t]]
    return states


def detect_bursts(recording, noise_var: float, params: BurstParams) -> list[EventSpan]:
    if noise_var <= 0:
        raise BurstError("noise variance must be positive")
    samples = recording.samples
    n_frames = 1 + (len(samples) - params.frame_len) // params.hop
    idx = np.arange(params.frame_len)[None, :] + params.hop * np.arange(n_frames)[:, None]
    frames = samples[idx]
    frame_ss = ((frames - frames.mean(axis=1, keepdims=True)) ** 2).sum(axis=1)
    frame_n = np.full(n_frames, params.frame_len, dtype=float)

    states = _viterbi_burst_path(frame_ss, frame_n, noise_var, params)

    spans = []
    sr = recording.sample_rate
    t = 0
    while t < n_frames:
        if states[t] == 1:
            run_start = t
            while t < n_frames and states[t] == 1:
                t += 1
            if t - run_start >= params.min_event_frames:
                start = run_start * params.hop / sr
                end = ((t - 1) * params.hop + params.frame_len) / sr
                if spans and start < spans[-1].end:  # overlapping frames (hop < frame_len)
                    spans[-1] = EventSpan(spans[-1].start, end, recording.night_id)
                else:
                    spans.append(EventSpan(start, end, recording.night_id))
        else:
            t += 1
    return spans


def merge_events(spans: list[EventSpan], merge_gap: float) -> list[EventSpan]:
    """Coalesce consecutive spans separated by less than merge_gap seconds."""
    merged: list[EventSpan] = []
    for span in spans:
        if merged and span.start - merged[-1].end < merge_gap:
            merged[-1] = EventSpan(merged[-1].start, span.end, span.night_id)
        else:
            merged.append(span)
    return merged


def slice_events(recording, spans: list[EventSpan]) -> list[SoundEvent]:
    sr = recording.sample_rate
    events = []
    for i, span in enumerate(spans):
        a = round(span.start * sr)
        b = round(span.end * sr)
        if a < 0 or b > len(recording.samples):
            raise BurstError(f"span [{span.start}, {span.end}] outside recording")
        events.append(SoundEvent(span=span, samples=recording.samples[a:b], index_in_night=i))
    return events


def extract_events(recording, params: BurstParams) -> list[SoundEvent]:
    """Full per-night extraction: noise floor, burst decoding, merging, slicing."""
    noise_var = estimate_noise_floor(recording, params)
    spans = detect_bursts(recording, noise_var, params)
    spans = merge_events(spans, params.merge_gap)
    return slice_events(recording, spans)
