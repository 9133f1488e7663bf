"""Phonetic confusion extraction and pronunciation-path augmentation.

Associates each canonical phone of one model set with the phone sequences a
second set recognizes in the same time span, turns the frequent associations
into probabilistic confusion rules, and grafts each rule onto the canonical
phone HMM as a parallel state path entered with mass beta * P(rule); the
canonical chain keeps mass 1 - beta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .decoding import TimedTranscription, force_align, phone_recognize
from .errors import ContractError, DimensionMismatchError, NoAlignmentError
from .graph import LocalGraph, chain_local_graphs, phone_local_graph
from .models import AugmentPath, ModelSet, PhoneHmm

log = logging.getLogger(__name__)

# target sequence -> occurrence count, keyed by source phone
AssocCounts = dict[tuple[str, tuple[str, ...]], int]

DEFAULT_PRUNE_THRESHOLD = 0.1
DEFAULT_MAX_TARGET_LEN = 3


@dataclass(frozen=True)
class Association:
    source: str
    target: tuple[str, ...]
    count: int


@dataclass(frozen=True)
class ConfusionRule:
    source: str
    target: tuple[str, ...]
    probability: float


@dataclass(frozen=True)
class ConfusionRuleSet:
    rules: dict[str, tuple[ConfusionRule, ...]]
    counts: AssocCounts = field(default_factory=dict)

    def for_source(self, phone: str) -> tuple[ConfusionRule, ...]:
        return self.rules.get(phone, ())


@dataclass(frozen=True)
class ConfusionMatrix:
    row_phones: tuple[str, ...]
    col_phones: tuple[str, ...]
    matrix: np.ndarray            # (R, C), rows with data sum to 1
    empty_rows: frozenset[str]    # sources with no observed target phones


@dataclass(frozen=True)
class AugmentConfig:
    beta: float = 0.5
    rules: ConfusionRuleSet | None = None
    alternate_set: str | None = None

    def validate(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ContractError(f"beta must lie in [0, 1], got {self.beta}")


def time_align_transcripts(sl: TimedTranscription,
                           nl: TimedTranscription) -> AssocCounts:
    """Assign each NL segment to the SL segment covering the majority of its
    duration (ties to the earlier SL segment); per SL segment the assigned NL
    labels in time order form one association."""
    sl.validate()
    nl.validate()
    if not sl.segments or not nl.segments:
        raise ContractError("transcriptions must be non-empty")
    sl_range = (sl.segments[0].start, sl.segments[-1].end)
    nl_range = (nl.segments[0].start, nl.segments[-1].end)
    if sl_range != nl_range:
        raise ContractError(
            f"transcriptions cover different frame ranges: {sl_range} vs {nl_range}")

    assigned: list[list[str]] = [[] for _ in sl.segments]
    for seg in nl.segments:
        overlaps = [max(0, min(seg.end, s.end) - max(seg.start, s.start))
                    for s in sl.segments]
        assigned[int(np.argmax(overlaps))].append(seg.label)

    counts: AssocCounts = {}
    for s, labels in zip(sl.segments, assigned):
        key = (s.label, tuple(labels))
        counts[key] = counts.get(key, 0) + 1
    return counts


def merge_counts(into: AssocCounts, new: AssocCounts) -> AssocCounts:
    for key, c in new.items():
        into[key] = into.get(key, 0) + c
    return into


def accumulate_associations(ms_first: ModelSet, ms_second: ModelSet,
                            corpus, insertion_penalty: float = 0.0) -> AssocCounts:
    """Force-align with the first set, phone-recognize with the second, and
    time-align the two passes over the whole corpus."""
    inventory = tuple(sorted(ms_second.hmms))
    counts: AssocCounts = {}
    for utt, phones in corpus:
        try:
            aligned = force_align(ms_first, phones, utt)
            recognized = phone_recognize(ms_second, inventory, utt,
                                         insertion_penalty=insertion_penalty)
        except NoAlignmentError:
            utt_id = getattr(utt, "utt_id", "") or "<anonymous>"
            log.warning("skipping unalignable utterance %s", utt_id)
            continue
        merge_counts(counts, time_align_transcripts(aligned, recognized))
    return counts


def extract_rules(counts: AssocCounts, min_relative_frequency: float = DEFAULT_PRUNE_THRESHOLD,
                  max_target_len: int = DEFAULT_MAX_TARGET_LEN) -> ConfusionRuleSet:
    """Per-source relative frequencies, pruned below the threshold and
    renormalized. A source whose every target falls below the threshold keeps
    its single most frequent target with probability 1."""
    if not 0.0 <= min_relative_frequency < 1.0:
        raise ContractError(
            f"threshold must lie in [0, 1), got {min_relative_frequency}")
    by_source: dict[str, dict[tuple, int]] = {}
    for (source, target), c in counts.items():
        if len(target) > max_target_len:
            continue
        by_source.setdefault(source, {})[target] = \
            by_source.setdefault(source, {}).get(target, 0) + c

    rules: dict[str, tuple[ConfusionRule, ...]] = {}
    for source, targets in sorted(by_source.items()):
        total = sum(targets.values())
        freqs = {t: c / total for t, c in targets.items()}
        kept = {t: f for t, f in freqs.items() if f >= min_relative_frequency}
        if not kept:
            best = max(sorted(freqs), key=lambda t: freqs[t])
            kept = {best: 1.0}
        norm = sum(kept.values())
        rules[source] = tuple(
            ConfusionRule(source=source, target=t, probability=f / norm)
            for t, f in sorted(kept.items()))
    return ConfusionRuleSet(rules=rules, counts=dict(counts))


def confusion_matrix(counts: AssocCounts) -> ConfusionMatrix:
    """Phone-to-phone matrix: each phone occurrence inside a multi-phone
    target is counted individually."""
    sources = sorted({src for src, _ in counts})
    targets = sorted({p for _, tgt in counts for p in tgt})
    occ = {src: {} for src in sources}
    for (src, tgt), c in counts.items():
        for p in tgt:
            occ[src][p] = occ[src].get(p, 0) + c
    matrix = np.zeros((len(sources), len(targets)))
    empty = set()
    col = {p: j for j, p in enumerate(targets)}
    for i, src in enumerate(sources):
        total = sum(occ[src].values())
        if total == 0:
            empty.add(src)
            continue
        for p, c in occ[src].items():
            matrix[i, col[p]] = c / total
    return ConfusionMatrix(row_phones=tuple(sources), col_phones=tuple(targets),
                           matrix=matrix, empty_rows=frozenset(empty))


def _local_to_matrix(lg: LocalGraph) -> np.ndarray:
    n = lg.size
    t = np.zeros((n + 2, n + 2))
    t[0, 1:n + 1] = lg.entry
    t[0, n + 1] = lg.skip
    t[1:n + 1, 1:n + 1] = lg.inner
    t[1:n + 1, n + 1] = lg.exit
    t[n + 1, n + 1] = 1.0
    return t


def augment_model(sl_hmm: PhoneHmm, rules, alt_ms: ModelSet,
                  cfg: AugmentConfig) -> PhoneHmm:
    """Graft one parallel state path per confusion rule onto the phone HMM.

    The canonical chain keeps entry mass 1-beta; rule R's branch (the chained
    alternate-set HMMs of its target) gets beta * P(R); an empty target
    becomes a direct entry-to-exit skip with the same mass.
    """
    cfg.validate()
    if sl_hmm.alt_paths:
        raise ContractError(f"phone {sl_hmm.phone!r} is already augmented")
    rules = list(rules)
    if not rules:
        return sl_hmm
    total = sum(r.probability for r in rules)
    if abs(total - 1.0) > 1e-10:
        raise ContractError(
            f"rule probabilities for {sl_hmm.phone!r} sum to {total}, not 1")
    if sl_hmm.states and sl_hmm.states[0].dims != alt_ms.dimensionality:
        raise DimensionMismatchError(
            f"phone D={sl_hmm.states[0].dims}, alternate set D={alt_ms.dimensionality}")
    paths = []
    for r in rules:
        if not r.target:
            paths.append(AugmentPath(target=(), entry_prob=cfg.beta * r.probability))
            continue
        chain = chain_local_graphs([phone_local_graph(alt_ms[p]) for p in r.target])
        paths.append(AugmentPath(
            target=tuple(r.target), entry_prob=cfg.beta * r.probability,
            states=tuple(chain.states), transitions=_local_to_matrix(chain)))
    return replace(sl_hmm, alt_paths=tuple(paths),
                   main_entry_prob=1.0 - cfg.beta)


def augment_model_set(ms: ModelSet, rules: ConfusionRuleSet, alt_ms: ModelSet,
                      cfg: AugmentConfig) -> ModelSet:
    """Augment every phone of the set that has extracted rules."""
    hmms = {}
    for phone, hmm in ms.hmms.items():
        hmms[phone] = augment_model(hmm, rules.for_source(phone), alt_ms, cfg)
    return replace(ms, hmms=hmms)
