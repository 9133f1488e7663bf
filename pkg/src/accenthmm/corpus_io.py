"""On-disk formats: binary feature files, label files, lexica, grammars,
manifests, and text serialization of models, rules and transforms.

Feature files are little-endian float64 with a fixed 16-byte header; every
other format is plain text with floats printed at 17 significant digits, so
all round trips are bit-exact.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .adaptation import MllrTransform
from .confusion import AssocCounts, ConfusionRule, ConfusionRuleSet
from .decoding import Grammar, Lexicon, Segment, TimedTranscription
from .errors import ContractError, FormatError
from .models import AugmentPath, Gmm, ModelSet, PhoneHmm, Utterance

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"AHF1"
FEATURE_VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_vec(v) -> str:
    return " ".join(_fmt(x) for x in np.asarray(v).ravel())


# ---------------------------------------------------------------- features

def write_features(path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise ContractError("feature matrix must be 2-D")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIII", FEATURE_MAGIC, FEATURE_VERSION,
                            matrix.shape[0], matrix.shape[1]))
        f.write(matrix.tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) < 16:
            raise FormatError("truncated feature header", offset=len(header))
        magic, version, frames, dims = struct.unpack("<4sIII", header)
        if magic != FEATURE_MAGIC:
            raise FormatError(f"bad magic {magic!r}", offset=0)
        if version != FEATURE_VERSION:
            raise FormatError(f"unsupported feature version {version}", offset=4)
        payload = f.read()
    expected = frames * dims * 8
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes, header promises {expected}",
            offset=16 + len(payload))
    return np.frombuffer(payload, dtype="<f8").reshape(frames, dims).copy()


# ------------------------------------------------------------ label files

def write_labels(path, trans: TimedTranscription) -> None:
    with open(path, "w") as f:
        for seg in trans.segments:
            f.write(f"{seg.start} {seg.end} {seg.label}\n")


def read_labels(path) -> TimedTranscription:
    segs = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 'start end label'")
            segs.append(Segment(parts[2], int(parts[0]), int(parts[1])))
    return TimedTranscription(segments=tuple(segs))


# ---------------------------------------------------------------- lexicon

def write_lexicon(path, lex: Lexicon) -> None:
    with open(path, "w") as f:
        for word in sorted(lex.entries):
            for variant in lex.entries[word]:
                f.write(word + " " + " ".join(variant) + "\n")


def read_lexicon(path) -> Lexicon:
    entries: dict[str, list] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise FormatError(f"{path}:{lineno}: word with no phones")
            entries.setdefault(parts[0], []).append(tuple(parts[1:]))
    return Lexicon(entries={w: tuple(v) for w, v in entries.items()})


# ---------------------------------------------------------------- grammar

def write_grammar(path, g: Grammar) -> None:
    with open(path, "w") as f:
        if g.word_penalty != 0.0:
            f.write(f"penalty {_fmt(g.word_penalty)}\n")
        if g.kind == "wordloop":
            f.write("wordloop\n")
            return
        f.write(f"start {g.start_state}\n")
        f.write(f"end {g.end_state}\n")
        for a, b, w in g.arcs:
            f.write(f"{a} {b} {w}\n")


def read_grammar(path) -> Grammar:
    kind = "fsg"
    arcs = []
    start, end, penalty = 0, None, 0.0
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "wordloop":
                kind = "wordloop"
            elif parts[0] == "penalty":
                penalty = float(parts[1])
            elif parts[0] == "start":
                start = int(parts[1])
            elif parts[0] == "end":
                end = int(parts[1])
            elif len(parts) == 3:
                arcs.append((int(parts[0]), int(parts[1]), parts[2]))
            else:
                raise FormatError(f"{path}:{lineno}: unparseable grammar line")
    if kind == "wordloop":
        return Grammar(kind="wordloop", word_penalty=penalty)
    if end is None:
        end = max((max(a, b) for a, b, _ in arcs), default=0)
    return Grammar(kind="fsg", arcs=tuple(arcs), start_state=start,
                   end_state=end, word_penalty=penalty)


# --------------------------------------------------------------- manifest

@dataclass(frozen=True)
class ManifestRecord:
    utt_id: str
    feature_path: str
    words: tuple[str, ...]
    phones: tuple[str, ...]
    speaker: str
    native_language: str


@dataclass(frozen=True)
class CorpusManifest:
    records: tuple[ManifestRecord, ...]
    frame_rate: float = 100.0

    def speakers(self) -> list[str]:
        seen = []
        for r in self.records:
            if r.speaker not in seen:
                seen.append(r.speaker)
        return seen


def write_manifest(path, manifest: CorpusManifest) -> None:
    with open(path, "w") as f:
        f.write(f"#accenthmm-manifest v1 frame_rate {_fmt(manifest.frame_rate)}\n")
        for r in manifest.records:
            words = " ".join(r.words) if r.words else "-"
            phones = " ".join(r.phones) if r.phones else "-"
            f.write("\t".join([r.utt_id, r.feature_path, words, phones,
                               r.speaker, r.native_language]) + "\n")


def read_manifest(path, check_files: bool = True) -> CorpusManifest:
    records = []
    frame_rate = 100.0
    base = os.path.dirname(os.path.abspath(path))
    seen = set()
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                parts = line.split()
                if "frame_rate" in parts:
                    frame_rate = float(parts[parts.index("frame_rate") + 1])
                continue
            cols = line.split("\t")
            if len(cols) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 tab-separated columns")
            utt_id, fpath, words, phones, speaker, lang = cols
            if utt_id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate utterance id {utt_id!r}")
            seen.add(utt_id)
            if check_files and not os.path.exists(os.path.join(base, fpath)):
                raise FormatError(f"{path}:{lineno}: missing feature file {fpath!r}")
            records.append(ManifestRecord(
                utt_id=utt_id, feature_path=fpath,
                words=tuple(words.split()) if words != "-" else (),
                phones=tuple(phones.split()) if phones != "-" else (),
                speaker=speaker, native_language=lang))
    return CorpusManifest(records=tuple(records), frame_rate=frame_rate)


def load_utterance(record: ManifestRecord, base_dir: str = ".") -> Utterance:
    feats = read_features(os.path.join(base_dir, record.feature_path))
    return Utterance(features=feats, utt_id=record.utt_id,
                     speaker=record.speaker,
                     native_language=record.native_language,
                     words=record.words, phones=record.phones)


# ------------------------------------------------------------------ splits

def split_leave_one_speaker_out(manifest: CorpusManifest, speaker: str):
    """Adaptation set: same-native-language records excluding the speaker;
    test set: the speaker's records."""
    test = [r for r in manifest.records if r.speaker == speaker]
    if not test:
        raise ContractError(f"unknown speaker {speaker!r}")
    lang = test[0].native_language
    adapt = [r for r in manifest.records
             if r.native_language == lang and r.speaker != speaker]
    if not adapt:
        log.warning("adaptation set empty: %s is the only %s speaker",
                    speaker, lang or "<untagged>")
    return adapt, test


def split_speaker_half(records, seed: int):
    """Deterministic half/half split of one speaker's records."""
    records = list(records)
    if len(records) < 2:
        raise ContractError("need at least 2 records to split")
    order = np.random.default_rng(seed).permutation(len(records))
    half = (len(records) + 1) // 2
    adapt = [records[i] for i in sorted(order[:half])]
    test = [records[i] for i in sorted(order[half:])]
    return adapt, test


# ---------------------------------------------------------- model set text

def write_model_set(path, ms: ModelSet) -> None:
    with open(path, "w") as f:
        f.write("ACCENTHMM-MODELSET 1\n")
        f.write(f"name {ms.name}\n")
        f.write(f"dims {ms.dimensionality}\n")
        f.write(f"numphones {len(ms.hmms)}\n")
        for phone in sorted(ms.hmms):
            hmm = ms.hmms[phone]
            f.write(f"phone {phone} {hmm.num_states} "
                    f"{_fmt(hmm.main_entry_prob)} {len(hmm.alt_paths)}\n")
            f.write("trans " + _fmt_vec(hmm.transitions) + "\n")
            for g in hmm.states:
                _write_gmm(f, g)
            for p in hmm.alt_paths:
                target = " ".join(p.target) if p.target else "<del>"
                f.write(f"alt {len(p.target)} {target} {_fmt(p.entry_prob)} "
                        f"{len(p.states)}\n")
                if p.states:
                    f.write("trans " + _fmt_vec(p.transitions) + "\n")
                    for g in p.states:
                        _write_gmm(f, g)


def _write_gmm(f, g: Gmm) -> None:
    f.write(f"gmm {g.num_components}\n")
    f.write("w " + _fmt_vec(g.weights) + "\n")
    for m in range(g.num_components):
        f.write("mu " + _fmt_vec(g.means[m]) + "\n")
        f.write("var " + _fmt_vec(g.variances[m]) + "\n")


class _Lines:
    def __init__(self, path):
        with open(path) as f:
            self.lines = [ln.rstrip("\n") for ln in f if ln.strip()]
        self.pos = 0
        self.path = path

    def next(self, expect: str | None = None) -> list[str]:
        if self.pos >= len(self.lines):
            raise FormatError(f"{self.path}: unexpected end of file")
        parts = self.lines[self.pos].split()
        self.pos += 1
        if expect is not None and parts[0] != expect:
            raise FormatError(
                f"{self.path}: expected {expect!r}, got {parts[0]!r} "
                f"at line {self.pos}")
        return parts


def read_model_set(path) -> ModelSet:
    ln = _Lines(path)
    header = ln.next()
    if header[:2] != ["ACCENTHMM-MODELSET", "1"]:
        raise FormatError(f"{path}: not a v1 model set file")
    name = " ".join(ln.next("name")[1:])
    dims = int(ln.next("dims")[1])
    numphones = int(ln.next("numphones")[1])
    hmms = {}
    for _ in range(numphones):
        head = ln.next("phone")
        phone, n_states = head[1], int(head[2])
        main_entry, n_alt = float(head[3]), int(head[4])
        trans = _read_matrix(ln, n_states + 2)
        states = tuple(_read_gmm(ln, dims) for _ in range(n_states))
        alts = []
        for _ in range(n_alt):
            alt = ln.next("alt")
            n_target = int(alt[1])
            target = tuple(alt[2:2 + max(n_target, 1)])
            if n_target == 0:
                target = ()
            entry_prob = float(alt[2 + max(n_target, 1)])
            n_branch = int(alt[3 + max(n_target, 1)])
            if n_branch:
                btrans = _read_matrix(ln, n_branch + 2)
                bstates = tuple(_read_gmm(ln, dims) for _ in range(n_branch))
            else:
                btrans, bstates = None, ()
            alts.append(AugmentPath(target=target, entry_prob=entry_prob,
                                    states=bstates, transitions=btrans))
        hmms[phone] = PhoneHmm(phone=phone, states=states, transitions=trans,
                               alt_paths=tuple(alts), main_entry_prob=main_entry)
    return ModelSet(name=name, dimensionality=dims, hmms=hmms)


def _read_matrix(ln: _Lines, n: int) -> np.ndarray:
    parts = ln.next("trans")
    vals = np.array([float(x) for x in parts[1:]])
    if vals.size != n * n:
        raise FormatError(f"{ln.path}: transition block has {vals.size} values, "
                          f"expected {n * n}")
    return vals.reshape(n, n)


def _read_gmm(ln: _Lines, dims: int) -> Gmm:
    m = int(ln.next("gmm")[1])
    weights = np.array([float(x) for x in ln.next("w")[1:]])
    means = np.empty((m, dims))
    variances = np.empty((m, dims))
    for i in range(m):
        means[i] = [float(x) for x in ln.next("mu")[1:]]
        variances[i] = [float(x) for x in ln.next("var")[1:]]
    return Gmm(weights=weights, means=means, variances=variances)


# ----------------------------------------------------------- rules, counts

def write_rules(path, rules: ConfusionRuleSet) -> None:
    with open(path, "w") as f:
        for source in sorted(rules.rules):
            for r in rules.rules[source]:
                target = " ".join(r.target) if r.target else "<del>"
                f.write(f"{source} -> {target} | {_fmt(r.probability)}\n")


def read_rules(path) -> ConfusionRuleSet:
    rules: dict[str, list] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            source, target, prob = _parse_rule_line(path, lineno, line)
            rules.setdefault(source, []).append(
                ConfusionRule(source=source, target=target, probability=prob))
    return ConfusionRuleSet(rules={s: tuple(v) for s, v in rules.items()})


def write_association_counts(path, counts: AssocCounts) -> None:
    with open(path, "w") as f:
        for (source, target), c in sorted(counts.items()):
            tgt = " ".join(target) if target else "<del>"
            f.write(f"{source} -> {tgt} | {c}\n")


def read_association_counts(path) -> AssocCounts:
    counts: AssocCounts = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            source, target, value = _parse_rule_line(path, lineno, line)
            counts[(source, target)] = int(value)
    return counts


def _parse_rule_line(path, lineno, line):
    try:
        lhs, rest = line.split("->", 1)
        tgt, value = rest.rsplit("|", 1)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: expected 'SOURCE -> targets | value'")
    target = tuple(tgt.split())
    if target == ("<del>",):
        target = ()
    return lhs.strip(), target, float(value)


# ---------------------------------------------------------------- transform

def write_transform(path, t: MllrTransform) -> None:
    with open(path, "w") as f:
        f.write("ACCENTHMM-MLLR 1\n")
        f.write(f"dims {t.dims}\n")
        f.write("A " + _fmt_vec(t.A) + "\n")
        f.write("b " + _fmt_vec(t.b) + "\n")


def read_transform(path) -> MllrTransform:
    ln = _Lines(path)
    if ln.next()[:2] != ["ACCENTHMM-MLLR", "1"]:
        raise FormatError(f"{path}: not a v1 transform file")
    d = int(ln.next("dims")[1])
    a = np.array([float(x) for x in ln.next("A")[1:]])
    b = np.array([float(x) for x in ln.next("b")[1:]])
    if a.size != d * d or b.size != d:
        raise FormatError(f"{path}: transform blocks do not match dims {d}")
    return MllrTransform(A=a.reshape(d, d), b=b)
