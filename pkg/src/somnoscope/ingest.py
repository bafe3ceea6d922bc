"""Loading overnight audio recordings and per-night satisfaction labels."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

SATISFIED = "satisfied"
UNSATISFIED = "unsatisfied"

# five-point questionnaire scale collapsed to the binary training label;
# neutral nights are dropped entirely
RATING_MAP = {
    "very_satisfied": SATISFIED,
    "satisfied": SATISFIED,
    "neutral": None,
    "unsatisfied": UNSATISFIED,
    "very_unsatisfied": UNSATISFIED,
}


class IngestError(RuntimeError):
    pass


@dataclass(frozen=True)
class AudioRecording:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int
    night_id: str
    subject_id: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise IngestError("sample_rate must be positive")
        if len(self.samples) == 0:
            raise IngestError("empty audio")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class NightLabel:
    night_id: str
    satisfaction: str  # SATISFIED or UNSATISFIED


def load_audio(path, night_id: str | None = None, subject_id: str = "") -> AudioRecording:
    """Read a PCM WAV file; multi-channel input keeps channel 0 only."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (ValueError, FileNotFoundError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if data.ndim > 1:
        data = data[:, 0]
    if data.size == 0:
        raise IngestError(f"{path}: zero-length audio")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise IngestError(f"{path}: unsupported sample encoding {data.dtype}")
    return AudioRecording(
        samples=samples,
        sample_rate=int(rate),
        night_id=night_id if night_id is not None else path.stem,
        subject_id=subject_id,
    )


def save_audio(path, recording: AudioRecording) -> None:
    """Write 16-bit PCM; load_audio(save_audio(x)) round-trips 16-bit data."""
    clipped = np.clip(recording.samples, -1.0, 32767.0 / 32768.0)
    wavfile.write(path, recording.sample_rate, np.round(clipped * 32768.0).astype(np.int16))


def load_labels(path) -> list[NightLabel]:
    """Read the labels CSV (columns night_id, rating); neutral rows dropped."""
    labels = []
    seen = set()
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            night_id = row["night_id"].strip()
            rating = row["rating"].strip()
            if rating not in RATING_MAP:
                raise IngestError(f"unknown rating {rating!r} for night {night_id}")
            if night_id in seen:
                raise IngestError(f"duplicate night_id {night_id!r}")
            seen.add(night_id)
            collapsed = RATING_MAP[rating]
            if collapsed is not None:
                labels.append(NightLabel(night_id=night_id, satisfaction=collapsed))
    return labels
