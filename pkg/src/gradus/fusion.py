"""Pitch realization, background structure templates, and phrase fusion
via pivot-chord reinterpretation.

Fusion fills template slots from the phrase catalog: the first slot by
cadence and closing treble degree, later slots by reinterpreting the
previous slot's final harmony in the new local key and demanding the
next phrase start on a grammar successor of that pivot. The assembled
degree score is re-checked against the hard rules before realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import FusionInfeasibleError, PhraseValidationError, SpellingError
from .library import PhraseLibrary
from .phrase import NoteEvent, Phrase, transpose_phrase
from .pitch import (
    Degree,
    Interval,
    KeyContext,
    Pitch,
    degree_of,
    pitch_from_midi,
    realize_degree,
)
from .rules import (
    CatalogEntry,
    ProgressionGrammar,
    RuleConfig,
    cadence_satisfies,
    rule_loss,
)


@dataclass(frozen=True)
class VoiceProfile:
    name: str
    central: Pitch
    low: Pitch
    high: Pitch

    def __post_init__(self):
        if not self.low.midi <= self.central.midi <= self.high.midi:
            raise PhraseValidationError(
                f"voice {self.name!r}: central pitch outside its hard range"
            )


def default_profiles(voices: Sequence[str]) -> dict[int, VoiceProfile]:
    """Treble and bass constants per the shipped defaults; inner voices sit
    around middle C."""
    profiles = {}
    last = len(voices) - 1
    for v, name in enumerate(voices):
        if v == 0:
            profiles[v] = VoiceProfile(name, Pitch("G", 0, 4), Pitch("C", 0, 4), Pitch("G", 0, 5))
        elif v == last:
            profiles[v] = VoiceProfile(name, Pitch("C", 0, 3), Pitch("E", 0, 2), Pitch("C", 0, 4))
        else:
            profiles[v] = VoiceProfile(name, Pitch("C", 0, 4), Pitch("F", 0, 3), Pitch("F", 0, 5))
    return profiles


def corpus_profiles(corpus: Sequence[Phrase]) -> dict[int, VoiceProfile]:
    """Centrals derived from the mean realized pitch per voice; falls back
    to the defaults for voices the corpus never realizes."""
    if not corpus:
        raise PhraseValidationError("empty corpus")
    voices = corpus[0].voices
    defaults = default_profiles(voices)
    sums = {v: [] for v in range(len(voices))}
    for p in corpus:
        for e in p.events:
            if e.pitch is not None:
                sums[e.voice].append(e.pitch.midi)
    out = {}
    for v, default in defaults.items():
        if sums.get(v):
            mean = int(round(float(np.mean(sums[v]))))
            low = min(default.low.midi, mean - 12)
            high = max(default.high.midi, mean + 12)
            out[v] = VoiceProfile(
                default.name, pitch_from_midi(mean), pitch_from_midi(low), pitch_from_midi(high)
            )
        else:
            out[v] = default
    return out


def realize_pitches(phrase: Phrase, profiles: dict[int, VoiceProfile]) -> Phrase:
    """Assign octaves by stepwise preference with a central-pitch fallback.

    Per voice: the opening note takes the in-range octave nearest the
    central pitch. Each later note takes an in-range placement within a
    major second of the previous pitch when one exists (the smallest such
    interval, ties downward); otherwise the in-range placement nearest
    the central pitch (ties toward the previous pitch, then downward).
    """
    for v in range(len(phrase.voices)):
        if v not in profiles:
            raise PhraseValidationError(f"no voice profile for voice {v}")
    realized: dict[int, NoteEvent] = {}
    for v in range(len(phrase.voices)):
        profile = profiles[v]
        prev_midi: Optional[int] = None
        for idx, e in enumerate(phrase.events):
            if e.voice != v:
                continue
            if e.pitch is not None:
                realized[idx] = e
                prev_midi = e.pitch.midi
                continue
            if e.degree is None:
                raise PhraseValidationError(
                    f"voice {phrase.voices[v]!r} at onset {e.onset}: placeholder event"
                )
            if e.degree.is_rest:
                realized[idx] = e
                continue
            spelled = realize_degree(e.degree, phrase.key, 4)
            feasible = [
                Pitch(spelled.step, spelled.alter, o)
                for o in range(0, 9)
                if profile.low.midi <= Pitch(spelled.step, spelled.alter, o).midi <= profile.high.midi
            ]
            if not feasible:
                raise SpellingError(
                    f"degree {e.degree} unrealizable in range of voice "
                    f"{phrase.voices[v]!r} at onset {e.onset}"
                )
            if prev_midi is None:
                chosen = min(feasible, key=lambda c: (abs(c.midi - profile.central.midi), c.midi))
            else:
                steps = [c for c in feasible if abs(c.midi - prev_midi) <= 2]
                if steps:
                    chosen = min(steps, key=lambda c: (abs(c.midi - prev_midi), c.midi))
                else:
                    chosen = min(
                        feasible,
                        key=lambda c: (
                            abs(c.midi - profile.central.midi),
                            abs(c.midi - prev_midi),
                            c.midi,
                        ),
                    )
            realized[idx] = replace(e, degree=None, pitch=chosen)
            prev_midi = chosen.midi
    events = tuple(realized[i] for i in range(len(phrase.events)))
    return replace(phrase, events=events)


# ----------------------------------------------------------------------
# Background structure templates
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TemplateSlot:
    local_key: int  # scale-degree root of the slot's key, relative to home
    cadence: str  # "authentic" | "perfect_authentic"
    final_treble: Degree  # required closing treble degree, in the home frame

    def __post_init__(self):
        if not 1 <= self.local_key <= 7:
            raise PhraseValidationError(f"local key degree {self.local_key} out of range")
        if self.cadence not in ("authentic", "perfect_authentic"):
            raise PhraseValidationError(f"unknown cadence requirement {self.cadence!r}")


@dataclass(frozen=True)
class UrsatzTemplate:
    name: str
    slots: tuple[TemplateSlot, ...]

    def __post_init__(self):
        if len(self.slots) < 2:
            raise PhraseValidationError("template needs at least two slots")
        if self.slots[-1].local_key != 1:
            raise PhraseValidationError("final slot must cadence in the home key")


def default_templates() -> tuple[UrsatzTemplate, ...]:
    """The descending third-line I-V-I skeleton, plus a fifth-line variant
    collapsed to three phrases with a relaxed interior slot."""
    three_line = UrsatzTemplate(
        name="3-line",
        slots=(
            TemplateSlot(1, "authentic", Degree(3)),
            TemplateSlot(5, "authentic", Degree(2)),
            TemplateSlot(1, "perfect_authentic", Degree(1)),
        ),
    )
    five_line = UrsatzTemplate(
        name="5-line",
        slots=(
            TemplateSlot(1, "authentic", Degree(5)),
            TemplateSlot(5, "authentic", Degree(2)),
            TemplateSlot(1, "perfect_authentic", Degree(1)),
        ),
    )
    return (three_line, five_line)


def sample_structure(
    templates: Sequence[UrsatzTemplate],
    rng: np.random.Generator,
    weights: Optional[Sequence[float]] = None,
) -> UrsatzTemplate:
    if not templates:
        raise PhraseValidationError("no templates to sample")
    if weights is None:
        return templates[int(rng.integers(len(templates)))]
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(templates) or np.any(w < 0) or w.sum() <= 0:
        raise PhraseValidationError("bad template weights")
    return templates[int(rng.choice(len(templates), p=w / w.sum()))]


# ----------------------------------------------------------------------
# Pivot selection and fusion
# ----------------------------------------------------------------------

def local_key_context(home: KeyContext, local_root: int) -> KeyContext:
    """Key whose tonic is the given scale degree of the home key."""
    if local_root == 1:
        return home
    tonic = realize_degree(Degree(local_root), home, 4)
    return KeyContext(tonic.step, tonic.alter, home.mode)


def localize_degree(global_degree: Degree, home: KeyContext, local_root: int) -> Degree:
    """Re-express a home-frame degree relative to a local key."""
    if local_root == 1:
        return global_degree
    pitch = realize_degree(global_degree, home, 4)
    return degree_of(pitch, local_key_context(home, local_root))


def globalize_degree(local_degree: Degree, home: KeyContext, local_root: int) -> Degree:
    if local_degree.is_rest or local_root == 1:
        return local_degree
    pitch = realize_degree(local_degree, local_key_context(home, local_root), 4)
    return degree_of(pitch, home)


def pivot_root(prev_local_key: int, prev_end_root: int, new_local_key: int) -> int:
    """Reinterpret the previous slot's closing harmony in the new key.

    Both the harmony and the keys are named by scale-degree roots, so the
    pivot is plain mod-7 position arithmetic: a closing I of the home key
    heard against the dominant key becomes IV.
    """
    home_position = (prev_local_key - 1 + prev_end_root - 1) % 7
    return (home_position - (new_local_key - 1)) % 7 + 1


@dataclass(frozen=True)
class FusionCandidate:
    index: int
    pivot: int  # pivot numeral root in the new local key
    transposition: Interval


def pivot_select(
    antecedent: CatalogEntry,
    prev_local_key: int,
    new_local_key: int,
    library: PhraseLibrary,
    grammar: ProgressionGrammar,
    home: KeyContext,
) -> list[FusionCandidate]:
    """Library phrases able to follow the antecedent in the new local key:
    their feasible start harmonies must include a grammar successor of the
    pivot reinterpretation of the antecedent's final harmony."""
    pivot = pivot_root(prev_local_key, antecedent.final_root, new_local_key)
    successors = grammar.successors(pivot)
    target_key = local_key_context(home, new_local_key)
    out = []
    for i, (p, entry) in enumerate(library):
        if entry.mode != home.mode:
            continue
        if not (entry.start_roots & successors):
            continue
        out.append(FusionCandidate(i, pivot, Interval.between(p.key, target_key)))
    return out


@dataclass(frozen=True)
class FusionPlan:
    template: UrsatzTemplate
    phrase_indices: tuple[int, ...]
    transpositions: tuple[Interval, ...]
    pivots: tuple[Optional[int], ...]  # pivot numeral root per seam; None for slot 0

    def to_dict(self) -> dict:
        return {
            "template": self.template.name,
            "slots": [
                {
                    "local_key": s.local_key,
                    "cadence": s.cadence,
                    "final_treble_degree": str(s.final_treble),
                }
                for s in self.template.slots
            ],
            "phrase_indices": list(self.phrase_indices),
            "transpositions": [[t.letter_shift, t.semitones] for t in self.transpositions],
            "pivots": list(self.pivots),
        }


def plan_from_dict(obj: dict) -> FusionPlan:
    from .pitch import parse_degree

    try:
        slots = tuple(
            TemplateSlot(
                local_key=int(s["local_key"]),
                cadence=s["cadence"],
                final_treble=parse_degree(s["final_treble_degree"]),
            )
            for s in obj["slots"]
        )
        return FusionPlan(
            template=UrsatzTemplate(name=obj["template"], slots=slots),
            phrase_indices=tuple(int(i) for i in obj["phrase_indices"]),
            transpositions=tuple(Interval(int(a), int(b)) for a, b in obj["transpositions"]),
            pivots=tuple(None if p is None else int(p) for p in obj["pivots"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PhraseValidationError(f"malformed fusion plan: {exc}") from exc


@dataclass(frozen=True)
class Score:
    home_key: KeyContext
    phrases: tuple[Phrase, ...]


def score_to_dict(score: Score) -> dict:
    from .phrase import phrase_to_dict

    return {
        "home_key": {"tonic": score.home_key.tonic_name, "mode": score.home_key.mode},
        "phrases": [phrase_to_dict(p) for p in score.phrases],
    }


def score_from_dict(obj: dict) -> Score:
    from .phrase import phrase_from_dict
    from .pitch import parse_key

    try:
        home = parse_key(obj["home_key"]["tonic"], obj["home_key"]["mode"])
        phrases = tuple(phrase_from_dict(p) for p in obj["phrases"])
    except (KeyError, TypeError) as exc:
        raise PhraseValidationError(f"malformed score document: {exc}") from exc
    if not phrases:
        raise PhraseValidationError("score has no phrases")
    return Score(home_key=home, phrases=phrases)


_ROMAN_TO_ROOT = {"I": 1, "II": 2, "III": 3, "IV": 4, "V": 5, "VI": 6, "VII": 7}


def templates_from_json(data: list) -> tuple[UrsatzTemplate, ...]:
    """Template file format: a JSON list of slots
    {local_key, cadence, final_treble_degree} describing one template, or
    a list of {name, slots} objects describing several."""
    from .pitch import parse_degree

    if data and isinstance(data[0], dict) and "local_key" in data[0]:
        data = [{"name": "template-0", "slots": data}]
    out = []
    for ti, tmpl in enumerate(data):
        slots = []
        for slot in tmpl["slots"]:
            lk = slot["local_key"]
            if isinstance(lk, str):
                lk = _ROMAN_TO_ROOT.get(lk.upper())
                if lk is None:
                    raise PhraseValidationError(
                        f"bad local_key in template {ti}: {slot['local_key']!r}"
                    )
            slots.append(
                TemplateSlot(
                    local_key=int(lk),
                    cadence=slot["cadence"],
                    final_treble=parse_degree(slot["final_treble_degree"]),
                )
            )
        out.append(UrsatzTemplate(name=str(tmpl.get("name", f"template-{ti}")), slots=tuple(slots)))
    return tuple(out)


def concatenate_degrees(phrases: Sequence[Phrase], home: KeyContext, local_keys: Sequence[int]) -> Phrase:
    """Single home-frame degree phrase: each slot phrase is re-expressed in
    global degrees and appended at the next bar boundary."""
    if not phrases:
        raise PhraseValidationError("nothing to concatenate")
    meter = phrases[0].meter
    bar = Fraction(meter[0])
    events = []
    offset = Fraction(0)
    for phrase, local in zip(phrases, local_keys):
        if phrase.meter != meter:
            raise PhraseValidationError("fused phrases must share a meter")
        for e in phrase.events:
            d = e.degree_in(phrase.key)
            if d is None:
                raise PhraseValidationError("cannot fuse placeholder events")
            events.append(
                replace(e, onset=e.onset + offset, degree=globalize_degree(d, home, local), pitch=None)
            )
        offset += Fraction(math.ceil(phrase.span / bar)) * bar
    return Phrase(key=home, meter=meter, voices=phrases[0].voices, events=tuple(events))


def fuse(
    template: UrsatzTemplate,
    library: PhraseLibrary,
    profiles: dict[int, VoiceProfile],
    grammar: ProgressionGrammar,
    rng: np.random.Generator,
    home: KeyContext,
    rule_config: RuleConfig = RuleConfig(),
    max_attempts_per_slot: int = 32,
) -> tuple[Score, FusionPlan]:
    """Fill every template slot from the library, verify the seams and the
    whole degree score, then realize concrete pitches."""
    if len(library) == 0:
        raise FusionInfeasibleError(0, "empty phrase library")

    n_slots = len(template.slots)
    attempts = [0] * n_slots

    def slot_candidates(slot_i: int, chosen: list[FusionCandidate]) -> list[FusionCandidate]:
        slot = template.slots[slot_i]
        required_treble = localize_degree(slot.final_treble, home, slot.local_key)
        target_key = local_key_context(home, slot.local_key)
        if slot_i == 0:
            base = [
                FusionCandidate(i, 0, Interval.between(library[i][0].key, target_key))
                for i, (p, entry) in enumerate(library)
                if entry.mode == home.mode and (entry.start_roots & grammar.start_roots)
            ]
        else:
            prev_slot = template.slots[slot_i - 1]
            prev_entry = library[chosen[-1].index][1]
            base = pivot_select(
                prev_entry, prev_slot.local_key, slot.local_key, library, grammar, home
            )
        out = []
        for cand in base:
            entry = library[cand.index][1]
            if not cadence_satisfies(entry.cadence, slot.cadence):
                continue
            if entry.final_treble != required_treble:
                continue
            if chosen and library[cand.index][0].meter != library[chosen[0].index][0].meter:
                continue
            out.append(cand)
        return [out[i] for i in rng.permutation(len(out))]

    def verify(chosen: list[FusionCandidate]) -> bool:
        phrases = [library[c.index][0] for c in chosen]
        locals_ = [s.local_key for s in template.slots]
        try:
            full = concatenate_degrees(phrases, home, locals_)
        except (PhraseValidationError, SpellingError):
            return False
        return rule_loss(full, rule_config) == 0

    chosen: list[FusionCandidate] = []
    stack: list[list[FusionCandidate]] = [slot_candidates(0, chosen)]
    failed_slot = 0
    while True:
        depth = len(chosen)
        if attempts[depth] >= max_attempts_per_slot or not stack[depth]:
            failed_slot = max(failed_slot, depth)
            if depth == 0:
                # Reported slot indices are 1-based, matching template prose.
                raise FusionInfeasibleError(
                    failed_slot + 1,
                    f"no feasible phrase assignment for slot {failed_slot + 1}",
                )
            stack.pop()
            chosen.pop()
            continue
        cand = stack[depth].pop(0)
        attempts[depth] += 1
        chosen.append(cand)
        if len(chosen) == n_slots:
            if verify(chosen):
                break
            chosen.pop()
            continue
        stack.append(slot_candidates(len(chosen), chosen))

    transposed = [
        transpose_phrase(library[c.index][0], c.transposition) for c in chosen
    ]
    realized = tuple(realize_pitches(p, profiles) for p in transposed)
    plan = FusionPlan(
        template=template,
        phrase_indices=tuple(c.index for c in chosen),
        transpositions=tuple(c.transposition for c in chosen),
        pivots=tuple([None] + [c.pivot for c in chosen[1:]]),
    )
    return Score(home_key=home, phrases=realized), plan
