"""Per-event power spectra on a fixed 10 Hz grid (10 Hz .. 24 kHz, 2,400 bands).

Events of arbitrary length are reduced to the grid Welch-style: half-
overlapping Hann-windowed segments whose length gives exactly 10 Hz DFT
resolution, periodograms averaged, one-sided power per band. DC and
sub-10 Hz energy are discarded.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

N_BANDS = 2400
BAND_HZ = 10.0
POSITIVITY_FLOOR = 1e-10


class SpectrumError(RuntimeError):
    pass


def band_center(k: int) -> float:
    """Center frequency in Hz of band k (k = 0 .. 2,399)."""
    return BAND_HZ * (k + 1)


def _segments(samples: np.ndarray, seg_len: int):
    """Full half-overlapping segments, plus one zero-padded segment for any tail."""
    n = len(samples)
    hop = seg_len // 2
    starts = []
    s = 0
    while s + seg_len <= n:
        starts.append(s)
        s += hop
    covered = starts[-1] + seg_len if starts else 0
    segs = [samples[s : s + seg_len] for s in starts]
    if covered < n:
        tail = np.zeros(seg_len)
        tail[: n - covered] = samples[covered:]
        segs.append(tail)
    return segs


def power_spectrum(event, sample_rate: int) -> np.ndarray:
    """Unnormalized 2,400-band power spectrum of one sound event.

    The per-band values are one-sided powers scaled so that their sum (plus
    the discarded DC term) equals the mean windowed time-domain energy of the
    segments (Parseval).
    """
    samples = np.asarray(event.samples if hasattr(event, "samples") else event, dtype=float)
    if len(samples) < 2:
        raise SpectrumError("event too short for a spectrum")
    if sample_rate % BAND_HZ:
        raise SpectrumError("sample_rate must be a multiple of 10 Hz")
    seg_len = int(sample_rate // BAND_HZ)  # 10 Hz DFT resolution

    window = np.hanning(seg_len)
    acc = np.zeros(seg_len // 2 + 1)
    segs = _segments(samples, seg_len)
    for seg in segs:
        spec = np.abs(np.fft.rfft(seg * window)) ** 2
        # one-sided scaling: double all but DC and Nyquist
        spec[1:-1] *= 2.0
        acc += spec / seg_len
    acc /= len(segs)

    bands = np.zeros(N_BANDS)
    avail = min(N_BANDS, len(acc) - 1)  # DFT bin j holds frequency 10*j Hz; skip DC
    bands[:avail] = acc[1 : 1 + avail]
    return bands


def normalize_spectrum(bands: np.ndarray) -> np.ndarray:
    """Project onto the probability simplex with a strict-positivity floor."""
    bands = np.asarray(bands, dtype=float)
    if bands.sum() <= 0:
        raise SpectrumError("all-zero spectrum cannot be normalized")
    floored = bands + POSITIVITY_FLOOR
    return floored / floored.sum()


def save_spectra(path, spectra: np.ndarray, index: list[tuple[str, int]]) -> None:
    """Persist row-per-event float32 matrix plus a JSON row index sidecar."""
    spectra = np.asarray(spectra)
    if spectra.ndim != 2 or spectra.shape[1] != N_BANDS:
        raise SpectrumError(f"expected (n, {N_BANDS}) matrix")
    if len(index) != len(spectra):
        raise SpectrumError("index length mismatch")
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(spectra, dtype="<f4").tobytes())
    rows = [{"night_id": nid, "index_in_night": i} for nid, i in index]
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(rows))


def load_spectra(path):
    path = Path(path)
    raw = np.frombuffer(path.read_bytes(), dtype="<f4").astype(np.float64)
    spectra = raw.reshape(-1, N_BANDS)
    rows = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    index = [(r["night_id"], r["index_in_night"]) for r in rows]
    if len(index) != len(spectra):
        raise SpectrumError("index length mismatch")
    return spectra, index
