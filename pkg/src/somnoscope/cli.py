"""Command-line entry points for the pipeline stages."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .burst import BurstParams, extract_events
from .cluster import export_latents, fit_gmm, load_gmm, responsibilities, save_gmm
from .harness import (
    ExperimentPlan,
    HarnessCorpus,
    compare_methods,
    corpus_from_audio,
    emit_report,
    run_sweep,
)
from .ingest import load_audio, load_labels
from .lstm import LstmConfig, init_lstm, load_lstm, save_lstm, train_lstm
from .sequence import AugmentConfig, NightSequence, augment, assemble_nights
from .spectrum import load_spectra, normalize_spectrum, power_spectrum, save_spectra
from .synth import AudioCorpus, SynthSpec, write_corpus
from .timeshap import explain_satisfaction, prune_events
from .vae import VaeConfig, encode, init_vae, load_vae, save_vae, train_vae


def _load_corpus_dir(audio_dir, labels_path):
    labels = load_labels(labels_path)
    label_map = {lab.night_id: lab.satisfaction for lab in labels}
    corpus = AudioCorpus(spec=None)
    for wav in sorted(Path(audio_dir).glob("*.wav")):
        rec = load_audio(wav)
        if rec.night_id in label_map:
            corpus.recordings.append(rec)
            corpus.labels[rec.night_id] = label_map[rec.night_id]
    return corpus


def _burst_params(args) -> BurstParams:
    return BurstParams(
        variance_ratio=args.ratio,
        transition_cost=args.gamma,
        merge_gap=args.merge_gap,
    )


def _nights_from_features(spectra_path, labels_path, vae_path, gmm_path=None):
    spectra, index = load_spectra(spectra_path)
    labels = load_labels(labels_path)
    vae = load_vae(vae_path)
    latents = encode(vae, spectra)
    rep = latents if gmm_path is None else responsibilities(load_gmm(gmm_path), latents)
    grouped: dict = {}
    for row, (night_id, idx) in enumerate(index):
        grouped.setdefault(night_id, []).append((idx, rep[row]))
    return assemble_nights(grouped, labels)


def cmd_ingest(args):
    corpus = _load_corpus_dir(args.audio, args.labels)
    for rec in corpus.recordings:
        print(f"{rec.night_id}: {rec.duration:.1f} s @ {rec.sample_rate} Hz, label={corpus.labels[rec.night_id]}")
    print(f"{len(corpus.recordings)} labeled nights")


def cmd_extract(args):
    params = _burst_params(args)
    with open(args.out, "w") as out:
        for wav in sorted(Path(args.in_dir).glob("*.wav")):
            rec = load_audio(wav)
            for ev in extract_events(rec, params):
                out.write(
                    json.dumps(
                        {
                            "night_id": rec.night_id,
                            "start": ev.span.start,
                            "end": ev.span.end,
                            "index": ev.index_in_night,
                        }
                    )
                    + "\n"
                )
    print(f"events written to {args.out}")


def cmd_spectra(args):
    params = _burst_params(args)
    rows, index = [], []
    for wav in sorted(Path(args.in_dir).glob("*.wav")):
        rec = load_audio(wav)
        for ev in extract_events(rec, params):
            rows.append(normalize_spectrum(power_spectrum(ev, rec.sample_rate)))
            index.append((rec.night_id, ev.index_in_night))
    save_spectra(args.out, np.asarray(rows), index)
    print(f"{len(rows)} spectra written to {args.out}")


def cmd_train_vae(args):
    spectra, _ = load_spectra(args.spectra)
    cfg = VaeConfig(latent_dim=args.latent_dim, epochs=args.epochs, seed=args.seed,
                    batch_size=min(128, len(spectra)))
    model, history = train_vae(init_vae(cfg), spectra)
    save_vae(args.out, model)
    print(f"final epoch loss {history[-1]:.4f}; model saved to {args.out}")


def cmd_cluster(args):
    spectra, index = load_spectra(args.spectra)
    vae = load_vae(args.model)
    latents = encode(vae, spectra)
    gmm, history = fit_gmm(latents, args.clusters, seed=args.seed)
    save_gmm(args.out, gmm)
    if args.export_latents:
        export_latents(latents, responsibilities(gmm, latents), args.export_latents)
    print(f"log-likelihood {history[-1]:.2f} after {len(history)} EM steps; saved to {args.out}")


def cmd_train_lstm(args):
    nights = _nights_from_features(args.spectra, args.labels, args.vae, args.gmm)
    aug = AugmentConfig(sample_size=args.sample_size, factor=args.factor, seed=args.seed)
    train_set = augment(nights, aug)
    input_dim = train_set[0].events.shape[1]
    cfg = LstmConfig(input_dim=input_dim, seed=args.seed)
    model, history = train_lstm(init_lstm(cfg), train_set)
    save_lstm(args.out, model)
    print(f"final epoch loss {history[-1]:.4f}; model saved to {args.out}")


def cmd_augment_preview(args):
    nights = json.loads(Path(args.nights).read_text())
    seqs = [
        NightSequence(n["night_id"], np.asarray(n["events"], dtype=float), n["label"])
        for n in nights
    ]
    out = augment(seqs, AugmentConfig(sample_size=args.sample_size, factor=args.factor, seed=args.seed))
    print(f"{len(seqs)} nights -> {len(out)} sequences")
    for s in out[: args.show]:
        print(f"  {s.night_id}: length {s.length}, label {s.label}")


def cmd_explain(args):
    model = load_lstm(args.lstm)
    nights = _nights_from_features(args.spectra, args.labels, args.vae, args.gmm)
    aggregates, _ = explain_satisfaction(
        model, nights, mode=args.mode, n_samples=args.samples, seed=args.seed
    )
    result = {label: rep.to_dict() for label, rep in aggregates.items()}
    if args.eta is not None:
        result["prune_index"] = {n.night_id: prune_events(model, n, args.eta) for n in nights}
    text = json.dumps(result, indent=1)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)


def cmd_synth(args):
    spec = SynthSpec(**json.loads(Path(args.spec).read_text())) if args.spec else SynthSpec()
    write_corpus(spec, args.out)
    print(f"synthetic corpus written to {args.out}")


def cmd_experiment(args):
    corpus_dir = Path(args.corpus)
    audio = _load_corpus_dir(corpus_dir, corpus_dir / "labels.csv")
    corpus = corpus_from_audio(audio)
    plan_dict = json.loads(Path(args.plan).read_text()) if args.plan else {}
    conventional = plan_dict.pop("conventional", None)
    plan = ExperimentPlan(**{k: tuple(v) if isinstance(v, list) else v for k, v in plan_dict.items()})
    if conventional:
        plan_c = ExperimentPlan(
            **{k: tuple(v) if isinstance(v, list) else v for k, v in conventional.items()}
        )
        result = compare_methods(corpus, plan, plan_c)
        records = result["records_proposed"] + result["records_conventional"]
        emit_report(records, args.out, plan=plan)
        print(
            f"proposed {result['proposed'].mean:.3f} vs conventional {result['conventional'].mean:.3f}"
            f" (p={result['p']:.4f}, significant={result['significant']})"
        )
    else:
        records = run_sweep(corpus, plan)
        emit_report(records, args.out, plan=plan)
        best = max((r for r in records if r.error is None), key=lambda r: r.mean)
        print(f"best cell: d={best.latent_dim} K={best.n_clusters} factor={best.factor} -> {best.mean:.3f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="somnoscope")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate audio + labels")
    p.add_argument("--audio", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_ingest)

    for name, fn in (("extract", cmd_extract), ("spectra", cmd_spectra)):
        p = sub.add_parser(name)
        p.add_argument("--in", dest="in_dir", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--ratio", type=float, default=2.0)
        p.add_argument("--merge-gap", type=float, default=0.5)
        p.set_defaults(func=fn)

    p = sub.add_parser("train-vae")
    p.add_argument("--spectra", required=True)
    p.add_argument("--latent-dim", type=int, default=20)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("cluster")
    p.add_argument("--model", required=True, help="trained VAE")
    p.add_argument("--spectra", required=True)
    p.add_argument("-K", "--clusters", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--export-latents", help="optional CSV of latents + posteriors")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train-lstm")
    p.add_argument("--spectra", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--gmm", required=True)
    p.add_argument("-n", "--sample-size", type=int, default=400)
    p.add_argument("-m", "--factor", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_lstm)

    p = sub.add_parser("augment-preview")
    p.add_argument("--nights", required=True, help="JSON nights file")
    p.add_argument("-n", "--sample-size", type=int, default=400)
    p.add_argument("-m", "--factor", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--show", type=int, default=5)
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("explain")
    p.add_argument("--lstm", required=True)
    p.add_argument("--spectra", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--gmm")
    p.add_argument("--mode", choices=("feature", "event"), default="feature")
    p.add_argument("--eta", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("synth")
    p.add_argument("--spec", help="JSON SynthSpec overrides")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("experiment")
    p.add_argument("--corpus", required=True, help="directory of WAVs + labels.csv")
    p.add_argument("--plan", help="JSON ExperimentPlan")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
