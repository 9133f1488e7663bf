"""Synthetic corpus generation: a generative oracle for the whole pipeline.

Feature streams are sampled from a model set state by state; a planted
"accent channel" substitutes alternate phone sequences for canonical phones
before sampling, so every downstream extraction result can be checked against
known ground truth. Everything is deterministic given the seed; per-utterance
seeds are derived as (seed, utterance index) so sampling may be parallelized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .models import ModelSet, Utterance


@dataclass(frozen=True)
class AccentChannel:
    """Per-phone substitution distribution: identity mass plus alternates."""

    rules: dict[str, tuple[tuple[tuple[str, ...], float], ...]]
    identity_mass: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        for phone, alts in self.rules.items():
            total = self.identity_mass.get(phone, 0.0) + sum(p for _, p in alts)
            if abs(total - 1.0) > 1e-10:
                raise ContractError(
                    f"channel masses for {phone!r} sum to {total}, not 1")


def apply_accent(canonical, ch: AccentChannel, seed) -> tuple[str, ...]:
    """Independently substitute each canonical phone through the channel."""
    ch.validate()
    rng = np.random.default_rng(seed)
    surface: list[str] = []
    for phone in canonical:
        alts = ch.rules.get(phone)
        if not alts:
            surface.append(phone)
            continue
        probs = [ch.identity_mass.get(phone, 0.0)] + [p for _, p in alts]
        choice = rng.choice(len(probs), p=np.asarray(probs) / sum(probs))
        if choice == 0:
            surface.append(phone)
        else:
            surface.extend(alts[choice - 1][0])
    return tuple(surface)


def sample_utterance(ms: ModelSet, phones, seed,
                     frames_per_state=None) -> Utterance:
    """Sample a feature stream for a phone sequence.

    frames_per_state: None follows the HMM's own transition topology; an int
    gives a fixed duration per state; ("geometric", mean) draws geometric
    durations with the given mean.
    """
    phones = tuple(phones)
    for p in phones:
        ms[p]
    rng = np.random.default_rng(seed)
    frames = []
    for phone in phones:
        hmm = ms[phone]
        for s in _state_visits(hmm, rng, frames_per_state):
            g = hmm.states[s]
            m = rng.choice(g.num_components, p=g.weights / g.weights.sum())
            frames.append(rng.normal(g.means[m], np.sqrt(g.variances[m])))
    return Utterance(features=np.asarray(frames), phones=phones)


def _state_visits(hmm, rng, spec):
    n = hmm.num_states
    if spec is None or spec == "model":
        t = hmm.transitions
        state = 1 + rng.choice(n, p=t[0, 1:n + 1] / t[0, 1:n + 1].sum())
        visits = []
        while state != n + 1:
            visits.append(state - 1)
            row = t[state, 1:]
            state = 1 + rng.choice(n + 1, p=row / row.sum())
        return visits
    if isinstance(spec, int):
        if spec < 1:
            raise ContractError("fixed frames per state must be >= 1")
        return [s for s in range(n) for _ in range(spec)]
    if isinstance(spec, tuple) and spec[0] == "geometric":
        mean = float(spec[1])
        if mean < 1.0:
            raise ContractError("geometric mean duration must be >= 1")
        return [s for s in range(n) for _ in range(rng.geometric(1.0 / mean))]
    raise ContractError(f"unknown frames_per_state spec {spec!r}")


@dataclass(frozen=True)
class SyntheticRecord:
    utterance: Utterance
    canonical: tuple[str, ...]   # what should have been pronounced
    surface: tuple[str, ...]     # what was actually pronounced
    speaker: str


@dataclass(frozen=True)
class SyntheticCorpus:
    records: tuple[SyntheticRecord, ...]
    seed: int


def sample_accented_utterance(sl_ms: ModelSet, nl_ms: ModelSet, canonical,
                              ch: AccentChannel, seed, frames_per_state=None,
                              speaker: str = "") -> SyntheticRecord:
    """Pass a canonical sequence through the channel and sample features.

    Substituted phones are sampled from the alternate (NL) set; phones kept
    canonical are sampled from the SL set. The NL set takes priority when a
    label exists in both.
    """
    canonical = tuple(canonical)
    if not canonical:
        raise ContractError("canonical phone sequence must be non-empty")
    surface = apply_accent(canonical, ch, np.random.default_rng([seed, 0]).integers(2**31))
    rng_seed = np.random.default_rng([seed, 1]).integers(2**31)
    rng = np.random.default_rng(rng_seed)
    frames = []
    for phone in surface:
        ms = nl_ms if phone in nl_ms.hmms else sl_ms
        hmm = ms[phone]
        for s in _state_visits(hmm, rng, frames_per_state):
            g = hmm.states[s]
            m = rng.choice(g.num_components, p=g.weights / g.weights.sum())
            frames.append(rng.normal(g.means[m], np.sqrt(g.variances[m])))
    utt = Utterance(features=np.asarray(frames), phones=canonical, speaker=speaker)
    return SyntheticRecord(utterance=utt, canonical=canonical, surface=surface,
                           speaker=speaker)


def make_synthetic_corpus(sl_ms: ModelSet, nl_ms: ModelSet, ch: AccentChannel,
                          canonical_sentences, seed: int,
                          frames_per_state=None, speaker: str = "spk0") -> SyntheticCorpus:
    records = tuple(
        sample_accented_utterance(sl_ms, nl_ms, sent, ch, [seed, i],
                                  frames_per_state=frames_per_state,
                                  speaker=speaker)
        for i, sent in enumerate(canonical_sentences))
    return SyntheticCorpus(records=records, seed=seed)
