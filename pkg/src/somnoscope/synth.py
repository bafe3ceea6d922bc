"""Synthetic corpora with planted ground truth at every pipeline stage.

Two tiers: audio-level nights (tone-burst events over Gaussian background,
for end-to-end runs) and posterior-level nights (near-one-hot cluster
posteriors, for fast classifier/explanation tests). Labels follow a planted
rule that is exactly recomputable from the emitted data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import SATISFIED, UNSATISFIED, AudioRecording, save_audio
from .burst import EventSpan
from .sequence import NightSequence

CLUSTER_FREQUENCY = "cluster_frequency"
TEMPORAL_SEGMENT = "temporal_segment"
BURST_DENSITY = "burst_density"


class SynthError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_nights: int = 20
    events_per_night: tuple = (380, 420)
    K_true: int = 4
    peak_freqs: tuple = (200.0, 800.0, 3000.0, 9000.0)  # Hz, one per template
    noise_floor: float = 0.01  # background amplitude sigma
    label_rule: str = CLUSTER_FREQUENCY
    rule_threshold: float = 0.3
    rule_cluster: int = 3
    rule_segment: int = 2  # third the temporal rule acts in (0=early, 2=late)
    high_rate: float = 0.5  # rule-cluster rate on "high" nights
    low_rate: float = 0.1
    posterior_noise: float = 0.4  # smoothing of the posterior-tier one-hots
    seed: int = 0
    sample_rate: int = 48000
    event_duration: tuple = (0.5, 1.0)  # seconds
    event_gap: tuple = (0.7, 1.2)  # seconds between events, > default merge_gap

    def __post_init__(self):
        if self.K_true < 2:
            raise SynthError("need K_true >= 2")
        if len(self.peak_freqs) != self.K_true:
            raise SynthError("one peak frequency per template required")
        if not all(10 < f < 24000 for f in self.peak_freqs):
            raise SynthError("peak frequencies must lie in (10, 24000) Hz")
        if not 0 <= self.rule_cluster < self.K_true:
            raise SynthError("rule_cluster out of range")


def _night_rng(spec: SynthSpec, night_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((spec.seed, night_index)))


def _template_probs(spec: SynthSpec, rate: float) -> np.ndarray:
    probs = np.full(spec.K_true, (1.0 - rate) / (spec.K_true - 1))
    probs[spec.rule_cluster] = rate
    return probs


def _draw_templates(spec: SynthSpec, rng, n_events: int, high: bool) -> np.ndarray:
    if spec.label_rule == TEMPORAL_SEGMENT:
        base, rem = divmod(n_events, 3)
        lengths = [base + (1 if i < rem else 0) for i in range(3)]
        parts = []
        for i, length in enumerate(lengths):
            if i == spec.rule_segment:
                rate = spec.high_rate if high else spec.low_rate
            else:
                rate = 1.0 / spec.K_true  # uninformative outside the active third
            parts.append(rng.choice(spec.K_true, size=length, p=_template_probs(spec, rate)))
        return np.concatenate(parts)
    rate = spec.high_rate if high else spec.low_rate
    return rng.choice(spec.K_true, size=n_events, p=_template_probs(spec, rate))


def recompute_label(spec: SynthSpec, templates) -> str:
    """Reapply the planted rule to a template sequence (generator oracle)."""
    templates = np.asarray(templates)
    n = len(templates)
    if spec.label_rule == BURST_DENSITY:
        return SATISFIED if n > spec.rule_threshold else UNSATISFIED
    if spec.label_rule == TEMPORAL_SEGMENT:
        base, rem = divmod(n, 3)
        lengths = [base + (1 if i < rem else 0) for i in range(3)]
        start = sum(lengths[: spec.rule_segment])
        templates = templates[start : start + lengths[spec.rule_segment]]
    freq = float(np.mean(templates == spec.rule_cluster)) if len(templates) else 0.0
    return SATISFIED if freq > spec.rule_threshold else UNSATISFIED


def _tone_burst(spec: SynthSpec, rng, template: int, n_samples: int) -> np.ndarray:
    """Narrowband tone with a flat-topped (Tukey) envelope, well above the floor."""
    freq = spec.peak_freqs[template]
    t = np.arange(n_samples) / spec.sample_rate
    phase = rng.uniform(0, 2 * np.pi)
    tone = np.sin(2 * np.pi * freq * t + phase)
    envelope = np.ones(n_samples)
    taper = max(2, int(0.05 * n_samples))
    ramp = 0.5 * (1 - np.cos(np.pi * np.arange(taper) / taper))
    envelope[:taper] = ramp
    envelope[-taper:] = ramp[::-1]
    return 10.0 * spec.noise_floor * envelope * tone


def generate_audio_night(spec: SynthSpec, night_index: int):
    """One synthetic night: (recording, ground-truth spans, template assignments)."""
    rng = _night_rng(spec, night_index)
    night_id = f"night{night_index:03d}"
    lo, hi = spec.events_per_night
    n_events = int(rng.integers(lo, hi + 1)) if hi > lo else lo
    high = bool(rng.integers(2))
    templates = _draw_templates(spec, rng, n_events, high) if n_events else np.array([], dtype=int)

    sr = spec.sample_rate
    durations = rng.uniform(*spec.event_duration, size=n_events)
    gaps = rng.uniform(*spec.event_gap, size=n_events + 1)
    total = float(gaps.sum() + durations.sum()) + 1.0
    samples = rng.normal(0.0, spec.noise_floor, size=int(total * sr))

    spans = []
    cursor = gaps[0]
    for j in range(n_events):
        a = int(round(cursor * sr))
        n = int(round(durations[j] * sr))
        samples[a : a + n] += _tone_burst(spec, rng, int(templates[j]), n)
        spans.append(EventSpan(start=a / sr, end=(a + n) / sr, night_id=night_id))
        cursor += durations[j] + gaps[j + 1]

    recording = AudioRecording(samples=samples, sample_rate=sr, night_id=night_id)
    return recording, spans, templates


def generate_posterior_nights(spec: SynthSpec) -> list[NightSequence]:
    """Fast tier: near-one-hot posterior sequences with planted labels."""
    nights = []
    for i in range(spec.n_nights):
        rng = _night_rng(spec, i)
        lo, hi = spec.events_per_night
        n_events = int(rng.integers(lo, hi + 1)) if hi > lo else lo
        high = bool(rng.integers(2))
        templates = _draw_templates(spec, rng, n_events, high)
        onehot = np.eye(spec.K_true)[templates]
        noisy = onehot + rng.uniform(0.0, spec.posterior_noise, size=onehot.shape)
        posteriors = noisy / noisy.sum(axis=1, keepdims=True)
        nights.append(
            NightSequence(
                night_id=f"night{i:03d}",
                events=posteriors,
                label=recompute_label(spec, templates),
            )
        )
    return nights


@dataclass
class AudioCorpus:
    spec: SynthSpec
    recordings: list = field(default_factory=list)
    spans: dict = field(default_factory=dict)  # night_id -> list[EventSpan]
    templates: dict = field(default_factory=dict)  # night_id -> np.ndarray
    labels: dict = field(default_factory=dict)  # night_id -> label


def generate_audio_corpus(spec: SynthSpec) -> AudioCorpus:
    corpus = AudioCorpus(spec=spec)
    for i in range(spec.n_nights):
        rec, spans, templates = generate_audio_night(spec, i)
        corpus.recordings.append(rec)
        corpus.spans[rec.night_id] = spans
        corpus.templates[rec.night_id] = templates
        corpus.labels[rec.night_id] = recompute_label(spec, templates)
    return corpus


def write_corpus(spec: SynthSpec, out_dir) -> None:
    """Emit WAV files, the labels CSV, and a ground-truth JSON for a corpus."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth = {}
    with open(out_dir / "labels.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["night_id", "rating"])
        for i in range(spec.n_nights):
            rec, spans, templates = generate_audio_night(spec, i)
            save_audio(out_dir / f"{rec.night_id}.wav", rec)
            label = recompute_label(spec, templates)
            w.writerow([rec.night_id, "satisfied" if label == SATISFIED else "unsatisfied"])
            truth[rec.night_id] = {
                "spans": [[s.start, s.end] for s in spans],
                "templates": [int(t) for t in templates],
                "label": label,
            }
    (out_dir / "ground_truth.json").write_text(json.dumps(truth, indent=1))
