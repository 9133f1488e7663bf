"""Command-line front end.

Subcommands are thin wrappers over the library operations; `crossval` runs
the full experimental matrix from a declarative JSON config.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import adaptation, confusion, corpus_io, decoding, synth, training
from .errors import AccentHmmError
from .experiment import ExperimentConfig, format_report_table, run_experiment
from .models import Utterance
from .synth import AccentChannel

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARTIAL = 2


def _corpus_from_manifest(path):
    manifest = corpus_io.read_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    return manifest, base, [
        (corpus_io.load_utterance(r, base), r.phones) for r in manifest.records]


def cmd_train(args):
    _, _, corpus = _corpus_from_manifest(args.manifest)
    ms, lls = training.train_model_set(
        corpus, num_states=args.states, mixtures=args.mixtures,
        iters=args.iters, name=args.name)
    corpus_io.write_model_set(args.output, ms)
    print(f"trained {len(ms.hmms)} phones; final log-likelihood {lls[-1]:.4f}")


def cmd_reestimate(args):
    ms = corpus_io.read_model_set(args.models)
    _, _, corpus = _corpus_from_manifest(args.manifest)
    ms, lls = adaptation.reestimate_accent(ms, corpus, args.iters,
                                           mixtures=args.mixtures)
    corpus_io.write_model_set(args.output, ms)
    print(f"re-estimated; final log-likelihood {lls[-1]:.4f}")


def _adaptation_config(args):
    return adaptation.AdaptationConfig(
        mode=args.mode, tau=getattr(args, "tau", 10.0),
        mllr_first=not getattr(args, "no_mllr_first", False))


def cmd_adapt_mllr(args):
    ms = corpus_io.read_model_set(args.models)
    _, _, corpus = _corpus_from_manifest(args.manifest)
    t = adaptation.estimate_mllr(ms, corpus, _adaptation_config(args))
    if args.transform:
        corpus_io.write_transform(args.transform, t)
    corpus_io.write_model_set(args.output, adaptation.apply_mllr(ms, t))


def cmd_adapt_map(args):
    ms = corpus_io.read_model_set(args.models)
    _, _, corpus = _corpus_from_manifest(args.manifest)
    adapted = adaptation.map_adapt(ms, corpus, _adaptation_config(args))
    corpus_io.write_model_set(args.output, adapted)


def cmd_align(args):
    ms = corpus_io.read_model_set(args.models)
    manifest, base, corpus = _corpus_from_manifest(args.manifest)
    os.makedirs(args.outdir, exist_ok=True)
    for utt, phones in corpus:
        trans = decoding.force_align(ms, phones, utt)
        corpus_io.write_labels(os.path.join(args.outdir, utt.utt_id + ".lab"), trans)


def cmd_precognize(args):
    ms = corpus_io.read_model_set(args.models)
    manifest, base, corpus = _corpus_from_manifest(args.manifest)
    inventory = tuple(sorted(ms.hmms))
    os.makedirs(args.outdir, exist_ok=True)
    for utt, _ in corpus:
        trans = decoding.phone_recognize(ms, inventory, utt,
                                         insertion_penalty=args.insertion_penalty)
        corpus_io.write_labels(os.path.join(args.outdir, utt.utt_id + ".lab"), trans)


def cmd_recognize(args):
    ms = corpus_io.read_model_set(args.models)
    lex = corpus_io.read_lexicon(args.lexicon)
    grammar = corpus_io.read_grammar(args.grammar)
    manifest, base, corpus = _corpus_from_manifest(args.manifest)
    with open(args.output, "w") as f:
        for utt, _ in corpus:
            try:
                words = decoding.word_recognize(ms, lex, grammar, utt)
            except AccentHmmError as e:
                log.warning("no parse for %s: %s", utt.utt_id, e)
                words = []
            f.write(utt.utt_id + "\t" + " ".join(words) + "\n")


def cmd_score(args):
    manifest = corpus_io.read_manifest(args.manifest, check_files=False)
    refs = {r.utt_id: list(r.words) for r in manifest.records}
    hyps = {}
    with open(args.hyps) as f:
        for line in f:
            if not line.strip():
                continue
            utt_id, _, words = line.rstrip("\n").partition("\t")
            hyps[utt_id] = words.split()
    ids = sorted(refs)
    report = decoding.score([hyps.get(i, []) for i in ids],
                            [refs[i] for i in ids])
    print(f"WER {report.wer:.2f}  SER {report.ser:.2f}  "
          f"(S {report.substitutions} D {report.deletions} "
          f"I {report.insertions} / N {report.ref_words})")


def cmd_extract_confusion(args):
    first = corpus_io.read_model_set(args.first)
    second = corpus_io.read_model_set(args.second)
    _, _, corpus = _corpus_from_manifest(args.manifest)
    counts = confusion.accumulate_associations(first, second, corpus)
    if args.counts:
        corpus_io.write_association_counts(args.counts, counts)
    rules = confusion.extract_rules(counts, args.threshold)
    corpus_io.write_rules(args.output, rules)


def cmd_augment(args):
    ms = corpus_io.read_model_set(args.models)
    alt = corpus_io.read_model_set(args.alt_models)
    rules = corpus_io.read_rules(args.rules)
    augmented = confusion.augment_model_set(
        ms, rules, alt, confusion.AugmentConfig(beta=args.beta))
    corpus_io.write_model_set(args.output, augmented)


def _read_channel(path) -> AccentChannel:
    with open(path) as f:
        raw = json.load(f)
    rules = {}
    identity = {}
    for phone, spec in raw.items():
        identity[phone] = float(spec.get("identity", 0.0))
        rules[phone] = tuple((tuple(t), float(p)) for t, p in spec.get("alts", []))
    return AccentChannel(rules=rules, identity_mass=identity)


def cmd_synth(args):
    sl = corpus_io.read_model_set(args.sl_models)
    nl = corpus_io.read_model_set(args.nl_models)
    channel = _read_channel(args.channel) if args.channel else AccentChannel(rules={})
    with open(args.sentences) as f:
        sentences = [tuple(line.split()) for line in f if line.strip()]
    os.makedirs(args.outdir, exist_ok=True)
    records = []
    for i, sent in enumerate(sentences):
        rec = synth.sample_accented_utterance(
            sl, nl, sent, channel, [args.seed, i], speaker=args.speaker)
        fname = f"{args.speaker}_{i:05d}.feat"
        corpus_io.write_features(os.path.join(args.outdir, fname),
                                 rec.utterance.features)
        records.append(corpus_io.ManifestRecord(
            utt_id=f"{args.speaker}_{i:05d}", feature_path=fname,
            words=(), phones=rec.canonical, speaker=args.speaker,
            native_language=args.language))
    corpus_io.write_manifest(os.path.join(args.outdir, "manifest.tsv"),
                             corpus_io.CorpusManifest(records=tuple(records)))
    print(f"wrote {len(records)} utterances to {args.outdir}")


def cmd_crossval(args):
    cfg = ExperimentConfig.from_file(args.config)
    manifest = corpus_io.read_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    report = run_experiment(cfg, manifest, base_dir=base)
    with open(args.output, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    print(format_report_table(report))
    return EXIT_PARTIAL if report["failures"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="accenthmm",
                                description="GMM-HMM non-native accent toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="flat-start Baum-Welch training")
    sp.add_argument("manifest")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--states", type=int, default=3)
    sp.add_argument("--mixtures", type=int, default=1)
    sp.add_argument("--iters", type=int, default=4)
    sp.add_argument("--name", default="trained")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("reestimate", help="accent re-estimation recipe")
    sp.add_argument("models")
    sp.add_argument("manifest")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--iters", type=int, default=4)
    sp.add_argument("--mixtures", type=int, default=64)
    sp.set_defaults(func=cmd_reestimate)

    sp = sub.add_parser("adapt-mllr", help="global MLLR mean adaptation")
    sp.add_argument("models")
    sp.add_argument("manifest")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--transform")
    sp.add_argument("--mode", choices=["supervised", "unsupervised"],
                    default="supervised")
    sp.set_defaults(func=cmd_adapt_mllr)

    sp = sub.add_parser("adapt-map", help="MAP mean adaptation (MLLR first)")
    sp.add_argument("models")
    sp.add_argument("manifest")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--tau", type=float, default=10.0)
    sp.add_argument("--mode", choices=["supervised", "unsupervised"],
                    default="supervised")
    sp.add_argument("--no-mllr-first", action="store_true")
    sp.set_defaults(func=cmd_adapt_map)

    sp = sub.add_parser("align", help="forced alignment to label files")
    sp.add_argument("models")
    sp.add_argument("manifest")
    sp.add_argument("-d", "--outdir", required=True)
    sp.set_defaults(func=cmd_align)

    sp = sub.add_parser("precognize", help="free phone-loop recognition")
    sp.add_argument("models")
    sp.add_argument("manifest")
    sp.add_argument("-d", "--outdir", required=True)
    sp.add_argument("--insertion-penalty", type=float, default=0.0)
    sp.set_defaults(func=cmd_precognize)

    sp = sub.add_parser("recognize", help="grammar-constrained word recognition")
    sp.add_argument("models")
    sp.add_argument("manifest")
    sp.add_argument("--lexicon", required=True)
    sp.add_argument("--grammar", required=True)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_recognize)

    sp = sub.add_parser("score", help="WER/SER against manifest references")
    sp.add_argument("hyps", help="TSV: utt_id<TAB>hypothesis words")
    sp.add_argument("manifest")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("extract-confusion",
                        help="extract confusion rules from two model sets")
    sp.add_argument("first")
    sp.add_argument("second")
    sp.add_argument("manifest")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--counts")
    sp.add_argument("--threshold", type=float, default=0.1)
    sp.set_defaults(func=cmd_extract_confusion)

    sp = sub.add_parser("augment", help="graft alternate pronunciation paths")
    sp.add_argument("models")
    sp.add_argument("rules")
    sp.add_argument("--alt-models", required=True)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--beta", type=float, default=0.5)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("synth", help="generate a synthetic accented corpus")
    sp.add_argument("sentences", help="file of canonical phone sequences")
    sp.add_argument("--sl-models", required=True)
    sp.add_argument("--nl-models", required=True)
    sp.add_argument("--channel", help="JSON accent-channel spec")
    sp.add_argument("-d", "--outdir", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--speaker", default="spk0")
    sp.add_argument("--language", default="synth")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("crossval", help="run the full experiment matrix")
    sp.add_argument("config", help="JSON experiment config")
    sp.add_argument("manifest")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_crossval)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ACCENTHMM_LOGLEVEL", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
    except (AccentHmmError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return rc if isinstance(rc, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
