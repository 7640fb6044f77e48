"""Reverse-diffusion inference with optional rule-guided candidate selection.

Each reverse step samples nodes independently from the exact posterior
mixture. Guidance draws K candidate steps, scores each candidate's
one-step clean estimate against the hard counterpoint rules, and keeps
the least-violating candidate; K=1 reduces to the unguided step, bit for
bit, under a shared random stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .denoiser import Denoiser
from .errors import PhraseValidationError
from .graph import FeatureFlags, build_graph, degrees_from_x, rebuild_phrase
from .phrase import Phrase, sample_rhythm
from .rules import RuleConfig, build_rule_context
from .schedule import NoiseSchedule, q_step, qbar, validate_marginal


@dataclass(frozen=True)
class GuidanceConfig:
    """K=1 disables guidance; scoring always uses hard violation counts."""

    K: int = 8
    seed: int = 0
    rule_mode: str = "hard"

    def __post_init__(self):
        if self.K < 1:
            raise PhraseValidationError("guidance needs K >= 1")
        if self.rule_mode != "hard":
            raise PhraseValidationError(f"unknown rule weight mode {self.rule_mode!r}")


def reverse_mixture(
    Xt: np.ndarray,
    t: int,
    p_hat: np.ndarray,
    schedule: NoiseSchedule,
    m: np.ndarray,
) -> np.ndarray:
    """Per-node unnormalized distribution over x^{t-1}, marginalizing the
    network's clean-class predictions through the exact posterior."""
    if not 1 <= t <= schedule.T:
        raise PhraseValidationError(f"reverse step undefined at t={t}")
    m = validate_marginal(m)
    xt_idx = np.argmax(Xt, axis=1).astype(np.int64)
    qb_prev = qbar(float(schedule.alpha_bar[t - 1]), m)
    q_t = q_step(schedule.alpha_at(t), m)
    qb_t = qbar(float(schedule.alpha_bar[t]), m)
    return kernels.reverse_mixture(p_hat, xt_idx, qb_prev, q_t, qb_t)


def reverse_step(
    Xt: np.ndarray,
    t: int,
    p_hat: np.ndarray,
    schedule: NoiseSchedule,
    m: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    mix = reverse_mixture(Xt, t, p_hat, schedule, m)
    totals = mix.sum(axis=1)
    if np.any(totals <= 0.0):
        bad = int(np.argmin(totals))
        raise PhraseValidationError(
            f"node {bad} has empty reverse support at t={t}; "
            "schedule and marginal are inconsistent"
        )
    probs = mix / totals[:, None]
    idx = kernels.categorical_sample(probs, rng.random(Xt.shape[0]))
    out = np.zeros_like(Xt)
    out[np.arange(Xt.shape[0]), idx] = 1.0
    return out


def scg_reverse_step(
    Xt: np.ndarray,
    t: int,
    p_hat: np.ndarray,
    schedule: NoiseSchedule,
    m: np.ndarray,
    config: GuidanceConfig,
    rng: np.random.Generator,
    score_candidate: Optional[Callable[[np.ndarray], float]] = None,
) -> np.ndarray:
    """Best-of-K guided reverse step.

    score_candidate receives a candidate X^{t-1} and returns its rule
    loss; ties keep the first-drawn candidate so runs are reproducible.
    """
    if config.K == 1 or score_candidate is None:
        return reverse_step(Xt, t, p_hat, schedule, m, rng)
    best = None
    best_loss = None
    for _ in range(config.K):
        cand = reverse_step(Xt, t, p_hat, schedule, m, rng)
        cand_loss = float(score_candidate(cand))
        if best_loss is None or cand_loss < best_loss:
            best, best_loss = cand, cand_loss
    return best


def sample_noise_x(n: int, m: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. draws from the marginal: the t=T starting point."""
    probs = np.tile(validate_marginal(m), (n, 1))
    idx = kernels.categorical_sample(probs, rng.random(n))
    out = np.zeros((n, len(m)))
    out[np.arange(n), idx] = 1.0
    return out


def generate_phrase(
    skeleton: Phrase,
    denoiser: Denoiser,
    params: dict[str, np.ndarray],
    schedule: NoiseSchedule,
    m: np.ndarray,
    config: GuidanceConfig,
    rule_config: RuleConfig = RuleConfig(),
    flags: FeatureFlags = FeatureFlags(),
    rng: Optional[np.random.Generator] = None,
) -> Phrase:
    """Denoise a rhythm skeleton into a degree-encoded phrase.

    The skeleton's rhythm, voices, and meter pass through unchanged; only
    node classes are inferred.
    """
    graph = build_graph(skeleton, flags)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    ctx = build_rule_context(skeleton, rule_config) if config.K > 1 else None

    def score(candidate: np.ndarray, t_prev: int) -> float:
        if t_prev >= 1:
            out = denoiser.forward(graph.with_x(candidate), t_prev, params)
            deg = np.argmax(out.p_hat, axis=1)
        else:
            deg = np.argmax(candidate, axis=1)
        return float(ctx.score(deg.astype(np.int64)))

    X = sample_noise_x(graph.n, m, rng)
    for t in range(schedule.T, 0, -1):
        out = denoiser.forward(graph.with_x(X), t, params)
        scorer = (lambda cand, tp=t - 1: score(cand, tp)) if ctx is not None else None
        X = scg_reverse_step(X, t, out.p_hat, schedule, m, config, rng, scorer)
    return rebuild_phrase(skeleton, degrees_from_x(X))


def generate_library(
    corpus: Sequence[Phrase],
    denoiser: Denoiser,
    params: dict[str, np.ndarray],
    schedule: NoiseSchedule,
    m: np.ndarray,
    B: int,
    config: GuidanceConfig,
    skeleton_mode: str = "whole-phrase",
    measures: int = 2,
    rule_config: RuleConfig = RuleConfig(),
    flags: FeatureFlags = FeatureFlags(),
) -> list[Phrase]:
    """Generate B phrases from independently drawn skeletons.

    Every phrase owns a private random stream spawned from the master
    seed, so results do not depend on execution order.
    """
    if B < 1:
        raise PhraseValidationError("library size must be at least 1")
    streams = np.random.SeedSequence(config.seed).spawn(B)
    out = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        skeleton = sample_rhythm(corpus, skeleton_mode, rng, measures=measures)
        out.append(
            generate_phrase(
                skeleton, denoiser, params, schedule, m, config,
                rule_config=rule_config, flags=flags, rng=rng,
            )
        )
    return out
