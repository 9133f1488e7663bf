"""Cross-validated experiment matrix: adapt, extract confusion, augment,
recognize and score over a corpus manifest.

Each condition names a (first set, second set) couple for the pronunciation
modelling plus optional accent- and speaker-level acoustic adaptation; folds
are leave-one-speaker-out within each native language. The report carries one
record per (condition, native language, speaker) plus pooled and averaged
aggregate rows, and is byte-identical for identical configs and seeds.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field

from .adaptation import (AdaptationConfig, apply_mllr, estimate_mllr,
                         map_adapt, reestimate_accent)
from .confusion import (AugmentConfig, accumulate_associations,
                        augment_model_set, extract_rules)
from .corpus_io import (CorpusManifest, load_utterance, read_grammar,
                        read_lexicon, read_model_set,
                        split_leave_one_speaker_out, split_speaker_half)
from .decoding import score, word_recognize
from .errors import AccentHmmError, ContractError, NoParseError

log = logging.getLogger(__name__)

SET_SELECTORS = ("sl", "nl", "mllr-acc", "map-acc", "reest", "nl-mllr", "nl-map")
ACCENT_METHODS = ("none", "mllr-acc", "map-acc", "reestimation")
SPEAKER_METHODS = ("none", "mllr", "map")


@dataclass(frozen=True)
class ConditionConfig:
    name: str
    confusion: bool = False
    first_set: str = "sl"
    second_set: str = "nl"
    accent_adaptation: str = "none"
    speaker_adaptation: str = "none"
    beta: float = 0.5
    prune_threshold: float = 0.1
    tau: float = 10.0
    bw_iters: int = 4
    reest_mixtures: int = 64

    def validate(self) -> None:
        if self.first_set not in SET_SELECTORS:
            raise ContractError(f"unknown first-set selector {self.first_set!r}")
        if self.second_set not in SET_SELECTORS:
            raise ContractError(f"unknown second-set selector {self.second_set!r}")
        if self.accent_adaptation not in ACCENT_METHODS:
            raise ContractError(
                f"unknown accent adaptation {self.accent_adaptation!r}")
        if self.speaker_adaptation not in SPEAKER_METHODS:
            raise ContractError(
                f"unknown speaker adaptation {self.speaker_adaptation!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ContractError(f"beta out of range: {self.beta}")
        if not 0.0 <= self.prune_threshold < 1.0:
            raise ContractError(f"prune threshold out of range: {self.prune_threshold}")
        if self.tau <= 0:
            raise ContractError(f"tau must be positive: {self.tau}")


@dataclass(frozen=True)
class ExperimentConfig:
    sl_models: str
    nl_models: str
    lexicon: str
    grammar: str
    conditions: tuple[ConditionConfig, ...]
    seed: int = 0

    @staticmethod
    def from_file(path: str) -> "ExperimentConfig":
        with open(path) as f:
            raw = json.load(f)
        conditions = tuple(ConditionConfig(**c) for c in raw.pop("conditions"))
        return ExperimentConfig(conditions=conditions, **raw)

    def validate(self) -> None:
        for p in (self.sl_models, self.nl_models, self.lexicon, self.grammar):
            if not os.path.exists(p):
                raise ContractError(f"missing input file: {p}")
        if not self.conditions:
            raise ContractError("no conditions configured")
        for c in self.conditions:
            c.validate()


def _load_corpus(records, base_dir):
    return [(load_utterance(r, base_dir), r.phones) for r in records]


class _Fold:
    """Per-speaker fold: caches accent-adapted model set derivations."""

    def __init__(self, sl, nl, adapt_corpus, seed):
        self.sl = sl
        self.nl = nl
        self.adapt_corpus = adapt_corpus
        self.seed = seed
        self._cache = {}

    def resolve(self, selector, tau=10.0, bw_iters=4, reest_mixtures=64):
        key = (selector, tau, bw_iters, reest_mixtures)
        if key in self._cache:
            return self._cache[key]
        sup = AdaptationConfig(mode="supervised", tau=tau)
        unsup = AdaptationConfig(mode="unsupervised", tau=tau)
        if selector == "sl":
            ms = self.sl
        elif selector == "nl":
            ms = self.nl
        elif selector == "mllr-acc":
            ms = apply_mllr(self.sl, estimate_mllr(self.sl, self.adapt_corpus, sup))
        elif selector == "map-acc":
            ms = map_adapt(self.sl, self.adapt_corpus, sup)
        elif selector == "reest":
            ms, _ = reestimate_accent(self.sl, self.adapt_corpus,
                                      bw_iters, mixtures=reest_mixtures)
        elif selector == "nl-mllr":
            ms = apply_mllr(self.nl, estimate_mllr(self.nl, self.adapt_corpus, unsup))
        elif selector == "nl-map":
            ms = map_adapt(self.nl, self.adapt_corpus, unsup)
        else:
            raise ContractError(f"unknown selector {selector!r}")
        self._cache[key] = ms
        return ms


def _recognition_set(fold: _Fold, cond: ConditionConfig):
    """Accent-adapted base set plus, for confusion conditions, the extracted
    rules and the alternate set to graft after any speaker adaptation."""
    accent_to_selector = {"none": "sl", "mllr-acc": "mllr-acc",
                          "map-acc": "map-acc", "reestimation": "reest"}
    base = fold.resolve(accent_to_selector[cond.accent_adaptation],
                        tau=cond.tau, bw_iters=cond.bw_iters,
                        reest_mixtures=cond.reest_mixtures)
    rules = None
    second = None
    if cond.confusion:
        first = fold.resolve(cond.first_set, tau=cond.tau,
                             bw_iters=cond.bw_iters,
                             reest_mixtures=cond.reest_mixtures)
        second = fold.resolve(cond.second_set, tau=cond.tau,
                              bw_iters=cond.bw_iters,
                              reest_mixtures=cond.reest_mixtures)
        counts = accumulate_associations(first, second, fold.adapt_corpus)
        rules = extract_rules(counts, cond.prune_threshold)
        base = first if cond.accent_adaptation == "none" else base
    return base, rules, second


def _evaluate_speaker(cfg: ExperimentConfig, cond: ConditionConfig,
                      fold: _Fold, test_records, base_dir, lex, grammar):
    base, rules, second = _recognition_set(fold, cond)

    if cond.speaker_adaptation != "none":
        adapt_recs, test_records = split_speaker_half(test_records, fold.seed)
        spk_corpus = _load_corpus(adapt_recs, base_dir)
        sup = AdaptationConfig(mode="supervised", tau=cond.tau)
        if cond.speaker_adaptation == "mllr":
            base = apply_mllr(base, estimate_mllr(base, spk_corpus, sup))
        else:
            base = map_adapt(base, spk_corpus, sup)

    if rules is not None:
        base = augment_model_set(base, rules, second,
                                 AugmentConfig(beta=cond.beta))

    hyps, refs = [], []
    for rec in test_records:
        utt = load_utterance(rec, base_dir)
        try:
            hyp = word_recognize(base, lex, grammar, utt)
        except NoParseError:
            hyp = []
        hyps.append(hyp)
        refs.append(list(rec.words))
    return score(hyps, refs)


def run_experiment(cfg: ExperimentConfig, manifest: CorpusManifest,
                   base_dir: str = ".") -> dict:
    """Execute every condition with leave-one-speaker-out cross-validation.

    A failed condition is reported with its cause; the run continues. The
    returned report is JSON-serializable with deterministic ordering.
    """
    cfg.validate()
    sl = read_model_set(cfg.sl_models)
    nl = read_model_set(cfg.nl_models)
    lex = read_lexicon(cfg.lexicon)
    grammar = read_grammar(cfg.grammar)
    speakers = manifest.speakers()

    folds = {}
    for speaker in speakers:
        adapt_recs, test_recs = split_leave_one_speaker_out(manifest, speaker)
        folds[speaker] = (_Fold(sl, nl, _load_corpus(adapt_recs, base_dir),
                                cfg.seed), test_recs)

    records = []
    failures = []
    for cond in cfg.conditions:
        for speaker in speakers:
            fold, test_recs = folds[speaker]
            lang = test_recs[0].native_language
            try:
                rep = _evaluate_speaker(cfg, cond, fold, test_recs,
                                        base_dir, lex, grammar)
            except AccentHmmError as e:
                failures.append({"condition": cond.name, "speaker": speaker,
                                 "cause": str(e)})
                log.warning("condition %s failed on %s: %s", cond.name, speaker, e)
                continue
            records.append({
                "condition": cond.name, "native_language": lang,
                "speaker": speaker, "wer": rep.wer, "ser": rep.ser,
                "ref_words": rep.ref_words, "sentences": rep.sentences,
                "errors": rep.substitutions + rep.deletions + rep.insertions,
                "sentence_errors": rep.sentence_errors,
            })

    report = {
        "config": {"seed": cfg.seed,
                   "conditions": [asdict(c) for c in cfg.conditions]},
        "records": sorted(records, key=lambda r: (r["condition"],
                                                  r["native_language"],
                                                  r["speaker"])),
        "aggregates": _aggregate(records),
        "failures": sorted(failures, key=lambda f: (f["condition"], f["speaker"])),
    }
    return report


def _aggregate(records) -> list[dict]:
    """Pooled (corpus-level counts) and averaged (mean of per-speaker rates)
    rows per (condition, language) and per condition overall."""
    groups: dict[tuple, list] = {}
    for r in records:
        groups.setdefault((r["condition"], r["native_language"]), []).append(r)
        groups.setdefault((r["condition"], "ALL"), []).append(r)
    rows = []
    for (cond, lang), rs in sorted(groups.items()):
        words = sum(r["ref_words"] for r in rs)
        errs = sum(r["errors"] for r in rs)
        sents = sum(r["sentences"] for r in rs)
        serrs = sum(r["sentence_errors"] for r in rs)
        rows.append({
            "condition": cond, "native_language": lang,
            "wer_pooled": 100.0 * errs / words if words else 0.0,
            "ser_pooled": 100.0 * serrs / sents if sents else 0.0,
            "wer_averaged": sum(r["wer"] for r in rs) / len(rs),
            "ser_averaged": sum(r["ser"] for r in rs) / len(rs),
            "speakers": len(rs),
        })
    return rows


def format_report_table(report: dict) -> str:
    lines = [f"{'condition':<20} {'lang':<8} {'WER(pool)':>10} {'SER(pool)':>10} "
             f"{'WER(avg)':>10} {'SER(avg)':>10}"]
    for row in report["aggregates"]:
        lines.append(f"{row['condition']:<20} {row['native_language']:<8} "
                     f"{row['wer_pooled']:>10.2f} {row['ser_pooled']:>10.2f} "
                     f"{row['wer_averaged']:>10.2f} {row['ser_averaged']:>10.2f}")
    if report["failures"]:
        lines.append("failed conditions:")
        for f in report["failures"]:
            lines.append(f"  {f['condition']} / {f['speaker']}: {f['cause']}")
    return "\n".join(lines)
