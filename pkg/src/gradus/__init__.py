"""Phrase generation by discrete graph diffusion on fixed rhythmic
skeletons, hard-rule rejection sampling, and structure-template fusion."""

__version__ = "0.1.0"

from .pitch import Degree, Interval, KeyContext, Pitch, degree_of, realize_degree
from .phrase import NoteEvent, Phrase, metric_strength, parse_phrase, sample_rhythm
from .graph import FeatureFlags, ScoreGraph, build_graph, rebuild_phrase, rhythm_features
from .schedule import NoiseSchedule, cosine_alpha_bar, forward_sample, marginals, posterior, qbar
from .denoiser import Denoiser, DenoiserHyperparams, train
from .sampler import GuidanceConfig, generate_library, generate_phrase, reverse_step, scg_reverse_step
from .rules import ProgressionGrammar, RuleConfig, analyze_harmony, reject, rule_loss
from .library import PhraseLibrary
from .fusion import UrsatzTemplate, VoiceProfile, fuse, realize_pitches, sample_structure

__all__ = [
    "Degree", "Interval", "KeyContext", "Pitch", "degree_of", "realize_degree",
    "NoteEvent", "Phrase", "metric_strength", "parse_phrase", "sample_rhythm",
    "FeatureFlags", "ScoreGraph", "build_graph", "rebuild_phrase", "rhythm_features",
    "NoiseSchedule", "cosine_alpha_bar", "forward_sample", "marginals", "posterior", "qbar",
    "Denoiser", "DenoiserHyperparams", "train",
    "GuidanceConfig", "generate_library", "generate_phrase", "reverse_step", "scg_reverse_step",
    "ProgressionGrammar", "RuleConfig", "analyze_harmony", "reject", "rule_loss",
    "PhraseLibrary",
    "UrsatzTemplate", "VoiceProfile", "fuse", "realize_pitches", "sample_structure",
]
