"""Forced alignment, phone recognition, grammar decoding and WER/SER scoring."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, NoAlignmentError, NoParseError, UnknownPhoneError
from .graph import (CompositeGraph, LoopSpec, NetworkUnit, build_composite,
                    chain_local_graphs, compile_network, phone_local_graph,
                    viterbi_best_path)
from .models import ModelSet, as_features


class Segment(NamedTuple):
    label: str
    start: int   # inclusive frame index
    end: int     # exclusive frame index


@dataclass(frozen=True)
class TimedTranscription:
    """Ordered, non-overlapping labelled frame segments."""

    segments: tuple[Segment, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.segments)

    @property
    def num_frames(self) -> int:
        return self.segments[-1].end if self.segments else 0

    def validate(self) -> None:
        prev_end = None
        for s in self.segments:
            if s.start >= s.end:
                raise ContractError(f"empty or inverted segment {s}")
            if prev_end is not None and s.start < prev_end:
                raise ContractError(f"overlapping segment {s}")
            prev_end = s.end


@dataclass(frozen=True)
class Lexicon:
    """Word to pronunciation-variant mapping."""

    entries: dict[str, tuple[tuple[str, ...], ...]]

    def validate(self, ms: ModelSet) -> None:
        for word, variants in self.entries.items():
            if not variants:
                raise ContractError(f"word {word!r} has no pronunciation")
            for var in variants:
                if not var:
                    raise ContractError(f"word {word!r} has an empty pronunciation")
                for p in var:
                    ms[p]


@dataclass(frozen=True)
class Grammar:
    """Word-loop or finite-state recognition grammar."""

    kind: str                                     # "wordloop" | "fsg"
    arcs: tuple[tuple[int, int, str], ...] = ()   # (from, to, word), fsg only
    start_state: int = 0
    end_state: int = 0
    word_penalty: float = 0.0                     # log-domain insertion penalty


def _segments_from_viterbi(graph: CompositeGraph, result) -> TimedTranscription:
    segs = []
    start = 0
    for t in range(1, len(result.path)):
        if result.boundaries[t]:
            segs.append(Segment(graph.labels[result.path[start]], start, t))
            start = t
    segs.append(Segment(graph.labels[result.path[start]], start, len(result.path)))
    return TimedTranscription(segments=tuple(segs))


def force_align(ms: ModelSet, phones, u) -> TimedTranscription:
    """Viterbi segmentation of the utterance against a known phone sequence."""
    phones = list(phones)
    if not phones:
        raise ContractError("phone sequence must be non-empty")
    graph = build_composite(ms, phones)
    result = viterbi_best_path(graph, u)
    return _segments_from_viterbi(graph, result)


def phone_recognize(ms: ModelSet, inventory, u,
                    insertion_penalty: float = 0.0) -> TimedTranscription:
    """Free phone-loop decode over the inventory."""
    inventory = tuple(inventory)
    if not inventory:
        raise ContractError("phone inventory must be non-empty")
    for p in inventory:
        ms[p]
    graph = build_composite(ms, LoopSpec(inventory=inventory))
    result = viterbi_best_path(graph, u, boundary_penalty=insertion_penalty)
    return _segments_from_viterbi(graph, result)


def compile_grammar(ms: ModelSet, lex: Lexicon, g: Grammar) -> CompositeGraph:
    """Expand a grammar over the lexicon into a composite decoding graph.

    Pronunciation variants are parallel branches with uniform priors; arcs
    leaving a grammar state share its remaining probability mass uniformly.
    """
    lex.validate(ms)
    if g.kind == "wordloop":
        words = sorted(lex.entries)
        if not words:
            raise ContractError("empty lexicon")
        arcs = tuple((0, 0, w) for w in words)
        g = Grammar(kind="fsg", arcs=arcs, start_state=0, end_state=0,
                    word_penalty=g.word_penalty)
    elif g.kind != "fsg":
        raise ContractError(f"unknown grammar kind {g.kind!r}")

    states = {g.start_state, g.end_state}
    for a, b, _ in g.arcs:
        states.update((a, b))
    index = {s: i for i, s in enumerate(sorted(states))}
    num_places = len(index)

    _check_end_reachable(g, index)

    outgoing: dict[int, list] = {i: [] for i in range(num_places)}
    for a, b, word in g.arcs:
        if word not in lex.entries:
            raise ContractError(f"grammar word {word!r} missing from lexicon")
        outgoing[index[a]].append((index[b], word))

    stop = np.zeros(num_places)
    end = index[g.end_state]
    stop[end] = 1.0 if not outgoing[end] else 1.0 / (len(outgoing[end]) + 1)

    units = []
    for p in range(num_places):
        arcs_out = outgoing[p]
        if not arcs_out:
            continue
        arc_prior = (1.0 - stop[p]) / len(arcs_out)
        for dst, word in arcs_out:
            variants = lex.entries[word]
            for var in variants:
                local = chain_local_graphs(
                    [phone_local_graph(ms[ph]) for ph in var])
                units.append(NetworkUnit(label=word, local=local, src=p,
                                         dst=dst, prior=arc_prior / len(variants)))
    return compile_network(units, num_places, index[g.start_state], stop,
                           ms.dimensionality)


def _check_end_reachable(g: Grammar, index: dict) -> None:
    adj: dict[int, set] = {i: set() for i in index.values()}
    for a, b, _ in g.arcs:
        adj[index[a]].add(index[b])
    seen = {index[g.start_state]}
    frontier = [index[g.start_state]]
    while frontier:
        nxt = []
        for s in frontier:
            for t in adj[s] - seen:
                seen.add(t)
                nxt.append(t)
        frontier = nxt
    if index[g.end_state] not in seen:
        raise NoParseError("grammar end state is unreachable from the start state")


def word_recognize(ms: ModelSet, lex: Lexicon, g: Grammar, u) -> list[str]:
    """Best word sequence under the joint acoustic and grammar score."""
    graph = compile_grammar(ms, lex, g)
    try:
        result = viterbi_best_path(graph, u, boundary_penalty=g.word_penalty)
    except NoAlignmentError as e:
        raise NoParseError(str(e)) from e
    trans = _segments_from_viterbi(graph, result)
    return list(trans.labels)


class EditOp(NamedTuple):
    op: str                 # "match" | "sub" | "ins" | "del"
    ref: str | None
    hyp: str | None


def align_tokens(ref: list[str], hyp: list[str]) -> list[EditOp]:
    """Minimum-edit-distance alignment with unit costs; on cost ties prefer
    substitution over insertion over deletion."""
    nr, nh = len(ref), len(hyp)
    cost = np.zeros((nr + 1, nh + 1), dtype=int)
    op = np.zeros((nr + 1, nh + 1), dtype=np.int8)   # 0 diag, 1 ins, 2 del
    cost[:, 0] = np.arange(nr + 1)
    op[1:, 0] = 2
    cost[0, :] = np.arange(nh + 1)
    op[0, 1:] = 1
    for i in range(1, nr + 1):
        for j in range(1, nh + 1):
            diag = cost[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            ins = cost[i, j - 1] + 1
            dele = cost[i - 1, j] + 1
            best = min(diag, ins, dele)
            cost[i, j] = best
            op[i, j] = 0 if diag == best else (1 if ins == best else 2)
    ops: list[EditOp] = []
    i, j = nr, nh
    while i > 0 or j > 0:
        k = op[i, j]
        if k == 0 and i > 0 and j > 0:
            kind = "match" if ref[i - 1] == hyp[j - 1] else "sub"
            ops.append(EditOp(kind, ref[i - 1], hyp[j - 1]))
            i -= 1
            j -= 1
        elif k == 1 and j > 0:
            ops.append(EditOp("ins", None, hyp[j - 1]))
            j -= 1
        else:
            ops.append(EditOp("del", ref[i - 1], None))
            i -= 1
    ops.reverse()
    return ops


@dataclass
class ScoreReport:
    wer: float
    ser: float
    per_pair_ops: list[list[EditOp]]
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_words: int = 0
    sentences: int = 0
    sentence_errors: int = 0


def score(hyps: list[list[str]], refs: list[list[str]]) -> ScoreReport:
    """Corpus WER/SER: WER = 100*(S+D+I)/N with N the total reference words."""
    if len(hyps) != len(refs):
        raise ContractError(
            f"{len(hyps)} hypotheses vs {len(refs)} references")
    report = ScoreReport(wer=0.0, ser=0.0, per_pair_ops=[])
    for hyp, ref in zip(hyps, refs):
        ops = align_tokens(list(ref), list(hyp))
        report.per_pair_ops.append(ops)
        s = sum(1 for o in ops if o.op == "sub")
        d = sum(1 for o in ops if o.op == "del")
        i = sum(1 for o in ops if o.op == "ins")
        report.substitutions += s
        report.deletions += d
        report.insertions += i
        report.ref_words += len(ref)
        report.sentences += 1
        if s + d + i > 0:
            report.sentence_errors += 1
    errors = report.substitutions + report.deletions + report.insertions
    report.wer = 100.0 * errors / report.ref_words if report.ref_words else 0.0
    report.ser = (100.0 * report.sentence_errors / report.sentences
                  if report.sentences else 0.0)
    return report
