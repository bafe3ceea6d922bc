"""Experiment orchestration: CV sweeps, method comparison, report emission.

Each sweep cell retrains the whole representation stack (VAE on training
folds, GMM on training-fold latents) before augmenting and training the
LSTM, so no test night ever influences any trained component.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .burst import BurstParams, extract_events
from .cluster import fit_gmm, responsibilities
from .lstm import LstmConfig, evaluate, init_lstm, train_lstm
from .sequence import AugmentConfig, NightSequence, augment, make_folds
from .spectrum import normalize_spectrum, power_spectrum
from .stats import aggregate, one_sided_t_test
from .vae import VaeConfig, encode, init_vae, train_vae

PROPOSED = "proposed"
CONVENTIONAL = "conventional"


class HarnessError(RuntimeError):
    pass


@dataclass
class HarnessCorpus:
    """Per-night normalized spectra plus binary labels, keyed by night id."""

    spectra: dict  # night_id -> (l, 2400) array
    labels: dict  # night_id -> label

    def night_ids(self):
        return sorted(self.spectra)


def corpus_from_audio(audio_corpus, burst_params: BurstParams | None = None) -> HarnessCorpus:
    """Run extraction + spectral featurization over an in-memory audio corpus."""
    params = burst_params or BurstParams()
    spectra = {}
    for rec in audio_corpus.recordings:
        events = extract_events(rec, params)
        if not events:
            continue
        rows = [normalize_spectrum(power_spectrum(ev, rec.sample_rate)) for ev in events]
        spectra[rec.night_id] = np.asarray(rows, dtype=np.float32)
    labels = {nid: audio_corpus.labels[nid] for nid in spectra}
    return HarnessCorpus(spectra=spectra, labels=labels)


def corpus_from_synth(spec, burst_params: BurstParams | None = None) -> HarnessCorpus:
    """Streaming variant: one synthetic night of audio in memory at a time."""
    from .synth import generate_audio_night, recompute_label

    params = burst_params or BurstParams()
    spectra = {}
    labels = {}
    for i in range(spec.n_nights):
        rec, _, templates = generate_audio_night(spec, i)
        events = extract_events(rec, params)
        if not events:
            continue
        rows = [normalize_spectrum(power_spectrum(ev, rec.sample_rate)) for ev in events]
        spectra[rec.night_id] = np.asarray(rows, dtype=np.float32)
        labels[rec.night_id] = recompute_label(spec, templates)
    return HarnessCorpus(spectra=spectra, labels=labels)


@dataclass(frozen=True)
class ExperimentPlan:
    latent_dims: tuple = (20, 100, 150)
    cluster_counts: tuple = (3, 6, 9)
    factors: tuple = (1, 200, 500, 1000, 2000, 5000)  # 1 = no augmentation
    folds: int = 4
    repeats: int = 5
    seed: int = 0
    method: str = PROPOSED
    sample_size: int = 400  # events per LSTM input sequence
    vae_hidden: tuple = (512,)
    vae_epochs: int = 10
    vae_batch_size: int = 128
    lstm_hidden: int = 50
    lstm_dropout: float = 0.2
    lstm_epochs: int = 10
    lstm_batch_size: int = 32

    def __post_init__(self):
        if not (self.latent_dims and self.cluster_counts and self.factors):
            raise HarnessError("sweep lists must be non-empty")
        if self.method not in (PROPOSED, CONVENTIONAL):
            raise HarnessError(f"unknown method {self.method!r}")


@dataclass
class RunRecord:
    latent_dim: int
    n_clusters: int | None
    factor: int
    method: str
    accuracies: list
    mean: float
    std: float
    wall_time: float
    seed: int
    error: str | None = None


def _sub_seed(*parts) -> int:
    import zlib

    ints = tuple(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in parts)
    return int(np.random.SeedSequence(ints).generate_state(1)[0] % 2**31)


def _check_no_leakage(train_nights, test_nights):
    train_ids = {n.night_id for n in train_nights}
    test_ids = {n.night_id for n in test_nights}
    if train_ids & test_ids:
        raise HarnessError(f"fold leakage: {sorted(train_ids & test_ids)}")


class _FoldArtifacts:
    """Caches the representation stack per (latent_dim, repeat-fold, K)."""

    def __init__(self, corpus: HarnessCorpus, plan: ExperimentPlan):
        self.corpus = corpus
        self.plan = plan
        self._latents: dict = {}
        self._posteriors: dict = {}

    def latents(self, d: int, split_idx: int, train_ids: frozenset):
        key = (d, split_idx)
        if key not in self._latents:
            plan = self.plan
            train_X = np.concatenate(
                [self.corpus.spectra[nid] for nid in sorted(train_ids)]
            ).astype(float)
            cfg = VaeConfig(
                hidden_dims=plan.vae_hidden,
                latent_dim=d,
                batch_size=min(plan.vae_batch_size, len(train_X)),
                epochs=plan.vae_epochs,
                seed=_sub_seed(plan.seed, "vae", d, split_idx),
            )
            model, _ = train_vae(init_vae(cfg), train_X)
            self._latents[key] = {
                nid: encode(model, self.corpus.spectra[nid].astype(float))
                for nid in self.corpus.night_ids()
            }
        return self._latents[key]

    def posteriors(self, d: int, K: int, split_idx: int, train_ids: frozenset):
        key = (d, K, split_idx)
        if key not in self._posteriors:
            latents = self.latents(d, split_idx, train_ids)
            train_Z = np.concatenate([latents[nid] for nid in sorted(train_ids)])
            gmm, _ = fit_gmm(train_Z, K, seed=_sub_seed(self.plan.seed, "gmm", d, K, split_idx))
            self._posteriors[key] = {nid: responsibilities(gmm, z) for nid, z in latents.items()}
        return self._posteriors[key]


def _cell_accuracies(artifacts: _FoldArtifacts, splits, d, K, factor):
    plan = artifacts.plan
    corpus = artifacts.corpus
    accs = []
    for split_idx, (train_nights, test_nights) in enumerate(splits):
        _check_no_leakage(train_nights, test_nights)
        train_ids = frozenset(n.night_id for n in train_nights)
        if plan.method == PROPOSED:
            rep = artifacts.posteriors(d, K, split_idx, train_ids)
            input_dim = K
        else:
            rep = artifacts.latents(d, split_idx, train_ids)
            input_dim = d
        train_seqs = [
            NightSequence(n.night_id, np.atleast_2d(rep[n.night_id]), n.label)
            for n in train_nights
        ]
        test_seqs = [
            NightSequence(n.night_id, np.atleast_2d(rep[n.night_id]), n.label)
            for n in test_nights
        ]
        aug_cfg = AugmentConfig(
            sample_size=plan.sample_size,
            factor=max(1, factor),
            seed=_sub_seed(plan.seed, "aug", d, K or 0, factor, split_idx),
        )
        train_set = augment(train_seqs, aug_cfg)
        assert {s.night_id for s in train_set}.isdisjoint({s.night_id for s in test_seqs})
        lstm_cfg = LstmConfig(
            input_dim=input_dim,
            hidden=plan.lstm_hidden,
            dropout=plan.lstm_dropout,
            epochs=plan.lstm_epochs,
            batch_size=plan.lstm_batch_size,
            seed=_sub_seed(plan.seed, "lstm", d, K or 0, factor, split_idx),
        )
        model, _ = train_lstm(init_lstm(lstm_cfg), train_set)
        accs.append(
            evaluate(
                model,
                test_seqs,
                sample_size=plan.sample_size,
                eval_seed=_sub_seed(plan.seed, "eval", split_idx),
            )
        )
    return accs


def _plan_nights(corpus: HarnessCorpus):
    # lightweight stand-ins carrying just identity and label for fold making
    return [
        NightSequence(nid, np.zeros((1, 1)), corpus.labels[nid]) for nid in corpus.night_ids()
    ]


def run_sweep(corpus: HarnessCorpus, plan: ExperimentPlan) -> list[RunRecord]:
    labels = set(corpus.labels.values())
    if len(labels) < 2:
        raise HarnessError("corpus must contain both labels")
    splits = make_folds(_plan_nights(corpus), k=plan.folds, repeats=plan.repeats, seed=plan.seed)
    artifacts = _FoldArtifacts(corpus, plan)
    cluster_counts = plan.cluster_counts if plan.method == PROPOSED else (None,)

    records = []
    for d in plan.latent_dims:
        for K in cluster_counts:
            for factor in plan.factors:
                t0 = time.perf_counter()
                try:
                    accs = _cell_accuracies(artifacts, splits, d, K, factor)
                    mean, std = aggregate(accs)
                    records.append(
                        RunRecord(
                            latent_dim=d,
                            n_clusters=K,
                            factor=factor,
                            method=plan.method,
                            accuracies=accs,
                            mean=mean,
                            std=std,
                            wall_time=time.perf_counter() - t0,
                            seed=plan.seed,
                        )
                    )
                except HarnessError:
                    raise
                except Exception as exc:  # keep sweeping past broken cells
                    records.append(
                        RunRecord(
                            latent_dim=d,
                            n_clusters=K,
                            factor=factor,
                            method=plan.method,
                            accuracies=[],
                            mean=float("nan"),
                            std=float("nan"),
                            wall_time=time.perf_counter() - t0,
                            seed=plan.seed,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    return records


def compare_methods(corpus: HarnessCorpus, plan_proposed: ExperimentPlan, plan_conventional: ExperimentPlan):
    """Best-cell accuracies of both methods plus the one-sided Welch test."""
    for attr in ("folds", "repeats", "seed"):
        if getattr(plan_proposed, attr) != getattr(plan_conventional, attr):
            raise HarnessError(f"plans disagree on {attr}; folds must match")
    if plan_proposed.method != PROPOSED or plan_conventional.method != CONVENTIONAL:
        raise HarnessError("plan methods must be proposed vs conventional")

    rec_p = run_sweep(corpus, plan_proposed)
    rec_c = run_sweep(corpus, plan_conventional)

    def best(records):
        valid = [r for r in records if r.error is None]
        if not valid:
            raise HarnessError("no successful cells")
        return max(valid, key=lambda r: r.mean)

    bp, bc = best(rec_p), best(rec_c)
    if bp.accuracies == bc.accuracies:
        t, p, sig = 0.0, 0.5, False
    else:
        t, p, sig = one_sided_t_test(bp.accuracies, bc.accuracies)
    return {
        "proposed": bp,
        "conventional": bc,
        "records_proposed": rec_p,
        "records_conventional": rec_c,
        "t": t,
        "p": p,
        "significant": sig,
    }


def _fmt(mean, std):
    return f"{mean:.3f}±{std:.3f}"


def emit_report(records: list[RunRecord], out_dir, plan: ExperimentPlan | None = None, shap_reports=None):
    """Write the long-format cells CSV, per-factor matrices, and a run manifest."""
    if not records:
        raise HarnessError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = ["method,latent_dim,n_clusters,factor,mean,std,n_trials,error"]
    for r in sorted(records, key=lambda r: (r.method, r.latent_dim, r.n_clusters or 0, r.factor)):
        lines.append(
            f"{r.method},{r.latent_dim},{'' if r.n_clusters is None else r.n_clusters},"
            f"{r.factor},{r.mean:.6f},{r.std:.6f},{len(r.accuracies)},{r.error or ''}"
        )
    (out_dir / "cells.csv").write_text("\n".join(lines) + "\n")

    factors = sorted({r.factor for r in records})
    dims = sorted({r.latent_dim for r in records})
    clusters = sorted({r.n_clusters for r in records if r.n_clusters is not None})
    by_key = {(r.latent_dim, r.n_clusters, r.factor, r.method): r for r in records}
    for factor in factors:
        rows = ["clusters\\latent_dim," + ",".join(str(d) for d in dims)]
        for K in clusters:
            cells = []
            for d in dims:
                r = by_key.get((d, K, factor, PROPOSED))
                cells.append(_fmt(r.mean, r.std) if r and r.error is None else "")
            rows.append(f"{K}," + ",".join(cells))
        (out_dir / f"matrix_factor{factor}.csv").write_text("\n".join(rows) + "\n")

    manifest = {
        "version": __version__,
        "plan": asdict(plan) if plan is not None else None,
        "records": [asdict(r) for r in records],
        "workers": os.environ.get("SOMNOSCOPE_WORKERS", "1"),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))

    if shap_reports:
        for label, report in shap_reports.items():
            rows = ["player,shap_value"]
            for name, value in zip(report.player_names, report.values):
                rows.append(f"{name},{value:.6f}")
            rows.append(f"pruned,{report.pruned_coalition_value:.6f}")
            (out_dir / f"shap_{label}.csv").write_text("\n".join(rows) + "\n")
