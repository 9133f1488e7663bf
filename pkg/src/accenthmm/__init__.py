"""GMM-HMM toolkit for non-native speech recognition adaptation."""

from .adaptation import (AdaptationConfig, MllrTransform, apply_mllr,
                         estimate_mllr, map_adapt, reestimate_accent)
from .confusion import (Association, AugmentConfig, ConfusionMatrix,
                        ConfusionRule, ConfusionRuleSet,
                        accumulate_associations, augment_model,
                        augment_model_set, confusion_matrix, extract_rules,
                        time_align_transcripts)
from .decoding import (Grammar, Lexicon, TimedTranscription, force_align,
                       phone_recognize, score, word_recognize)
from .graph import (CompositeGraph, LoopSpec, build_composite,
                    forward_log_likelihood, viterbi_best_path)
from .models import (AugmentPath, Gmm, ModelSet, PhoneHmm, Utterance,
                     compute_deltas, gmm_log_density)
from .synth import (AccentChannel, SyntheticCorpus, apply_accent,
                    make_synthetic_corpus, sample_utterance)
from .training import baum_welch, train_model_set

__all__ = [
    "AccentChannel", "AdaptationConfig", "Association", "AugmentConfig",
    "AugmentPath", "CompositeGraph", "ConfusionMatrix", "ConfusionRule",
    "ConfusionRuleSet", "Gmm", "Grammar", "Lexicon", "LoopSpec",
    "MllrTransform", "ModelSet", "PhoneHmm", "SyntheticCorpus",
    "TimedTranscription", "Utterance", "accumulate_associations",
    "apply_accent", "apply_mllr", "augment_model", "augment_model_set",
    "baum_welch", "build_composite", "compute_deltas", "confusion_matrix",
    "estimate_mllr", "extract_rules", "force_align",
    "forward_log_likelihood", "gmm_log_density", "make_synthetic_corpus",
    "map_adapt", "phone_recognize", "reestimate_accent", "sample_utterance",
    "score", "time_align_transcripts", "train_model_set",
    "viterbi_best_path", "word_recognize",
]
