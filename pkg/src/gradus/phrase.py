"""Phrase model, on-disk phrase format, and rhythm skeleton sampling.

Onsets and durations are exact fractions in units of the meter's
denominator note (a "beat"), so a quarter note in 4/4 and an eighth note
in 6/8 both have duration 1. Bar length equals the meter numerator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import PhraseParseError, PhraseValidationError
from .pitch import (
    Degree,
    Interval,
    KeyContext,
    Pitch,
    degree_of,
    parse_degree,
    parse_key,
    parse_pitch,
)


@dataclass(frozen=True)
class NoteEvent:
    """One scored event: a pitched note, a degree-encoded note, a rest, or
    (in rhythm skeletons) a placeholder with neither."""

    voice: int
    onset: Fraction
    duration: Fraction
    degree: Optional[Degree] = None
    pitch: Optional[Pitch] = None
    tie: bool = False  # continuation of the previous event in this voice

    def __post_init__(self):
        if self.duration <= 0:
            raise PhraseValidationError(f"duration must be positive, got {self.duration}")
        if self.onset < 0:
            raise PhraseValidationError(f"onset must be non-negative, got {self.onset}")
        if self.degree is not None and self.pitch is not None:
            raise PhraseValidationError("event carries both a degree and a pitch")

    @property
    def end(self) -> Fraction:
        return self.onset + self.duration

    @property
    def is_rest(self) -> bool:
        return self.degree is not None and self.degree.is_rest

    def degree_in(self, key: KeyContext) -> Optional[Degree]:
        """Degree content regardless of encoding; None for placeholders."""
        if self.degree is not None:
            return self.degree
        if self.pitch is not None:
            return degree_of(self.pitch, key)
        return None


@dataclass(frozen=True)
class Phrase:
    key: KeyContext
    meter: tuple[int, int]
    voices: tuple[str, ...]
    events: tuple[NoteEvent, ...]
    cadence_annotation: Optional[str] = None
    structural: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.voices) < 1:
            raise PhraseValidationError("phrase needs at least one voice")
        if not self.events:
            raise PhraseValidationError("phrase has no events")
        num, den = self.meter
        if num < 1 or den < 1:
            raise PhraseValidationError(f"bad meter {self.meter}")
        # Canonical event order: by onset, then voice.
        ordered = tuple(sorted(self.events, key=lambda e: (e.onset, e.voice)))
        object.__setattr__(self, "events", ordered)
        for e in ordered:
            if e.voice >= len(self.voices):
                raise PhraseValidationError(f"event voice {e.voice} out of range")
        for v in range(len(self.voices)):
            own = [e for e in ordered if e.voice == v]
            for a, b in zip(own, own[1:]):
                if b.onset < a.end:
                    raise PhraseValidationError(
                        f"overlapping events in voice {self.voices[v]!r} at onset {b.onset}"
                    )
        if self.span <= 0:
            raise PhraseValidationError("phrase has zero span")

    @property
    def span(self) -> Fraction:
        return max(e.end for e in self.events)

    @property
    def bar_length(self) -> Fraction:
        return Fraction(self.meter[0])

    @property
    def n_bars(self) -> int:
        full, rem = divmod(self.span, self.bar_length)
        return int(full) + (1 if rem else 0)

    def voice_events(self, voice: int) -> tuple[NoteEvent, ...]:
        return tuple(e for e in self.events if e.voice == voice)

    def is_realized(self) -> bool:
        return all(e.pitch is not None or e.is_rest for e in self.events)

    def is_degree_encoded(self) -> bool:
        return all(e.degree is not None or e.pitch is not None for e in self.events)


def _frac(text: str, what: str) -> Fraction:
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError):
        raise PhraseParseError(f"cannot parse {what} {text!r} as a fraction") from None


def parse_phrase(document: str) -> Phrase:
    """Parse phrase JSON text; unknown fields are ignored."""
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise PhraseParseError(f"malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    return phrase_from_dict(obj)


def phrase_from_dict(obj: dict) -> Phrase:
    try:
        key = parse_key(obj["key"]["tonic"], obj["key"]["mode"])
        meter = (int(obj["meter"][0]), int(obj["meter"][1]))
        voices = tuple(str(v) for v in obj["voices"])
        raw_events = obj["events"]
    except (KeyError, TypeError, IndexError) as exc:
        raise PhraseParseError(f"missing or malformed phrase field: {exc}") from exc
    events = []
    for ev in raw_events:
        if "pitch" in ev and "degree" in ev:
            raise PhraseParseError("event carries both 'pitch' and 'degree'")
        degree = parse_degree(ev["degree"]) if "degree" in ev else None
        pitch = parse_pitch(ev["pitch"]) if "pitch" in ev else None
        events.append(
            NoteEvent(
                voice=int(ev["voice"]),
                onset=_frac(ev["onset"], "onset"),
                duration=_frac(ev["duration"], "duration"),
                degree=degree,
                pitch=pitch,
                tie=bool(ev.get("tie", False)),
            )
        )
    structural = tuple((int(a), int(b)) for a, b in obj.get("structural", []))
    return Phrase(
        key=key,
        meter=meter,
        voices=voices,
        events=tuple(events),
        cadence_annotation=obj.get("cadence"),
        structural=structural,
    )


def phrase_to_dict(phrase: Phrase) -> dict:
    events = []
    for e in phrase.events:
        ev: dict = {"voice": e.voice, "onset": str(e.onset), "duration": str(e.duration)}
        if e.pitch is not None:
            ev["pitch"] = str(e.pitch)
        elif e.degree is not None:
            ev["degree"] = str(e.degree)
        if e.tie:
            ev["tie"] = True
        events.append(ev)
    out = {
        "key": {"tonic": phrase.key.tonic_name, "mode": phrase.key.mode},
        "meter": list(phrase.meter),
        "voices": list(phrase.voices),
        "events": events,
    }
    if phrase.cadence_annotation:
        out["cadence"] = phrase.cadence_annotation
    if phrase.structural:
        out["structural"] = [list(p) for p in phrase.structural]
    return out


def serialize_phrase(phrase: Phrase) -> str:
    return json.dumps(phrase_to_dict(phrase), indent=2) + "\n"


def load_corpus(directory: str | Path) -> list[Phrase]:
    """Load every *.phrase.json in a directory, sorted by filename."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.phrase.json"))
    if not paths:
        raise PhraseParseError(f"no *.phrase.json files in {directory}")
    phrases = []
    for p in paths:
        try:
            phrases.append(parse_phrase(p.read_text()))
        except (PhraseParseError, PhraseValidationError) as exc:
            raise type(exc)(f"{p.name}: {exc}") from exc
    return phrases


def metric_strength(onset: Fraction, meter: tuple[int, int]) -> float:
    """Accent weight of a beat position; periodic with the bar length."""
    num, _ = meter
    pos = Fraction(onset) % num
    if pos.denominator != 1:
        return 0.125
    beat = int(pos)
    if beat == 0:
        return 1.0
    if num == 4 and beat == 2:
        return 0.5
    return 0.25


def transpose_phrase(phrase: Phrase, interval: Interval) -> Phrase:
    """Shift a phrase by a diatonic interval; degrees are key-relative and
    therefore unchanged, pitches and the key move together."""
    new_key = interval.apply_to_key(phrase.key)
    events = tuple(
        replace(e, pitch=interval.apply(e.pitch) if e.pitch is not None else None)
        for e in phrase.events
    )
    return replace(phrase, key=new_key, events=events)


def strip_to_skeleton(phrase: Phrase) -> Phrase:
    """Erase all pitch/degree content, keeping rhythm, voices, and ties."""
    events = tuple(replace(e, degree=None, pitch=None) for e in phrase.events)
    return replace(phrase, events=events, cadence_annotation=None, structural=())


def split_measures(phrase: Phrase) -> list[tuple[NoteEvent, ...]]:
    """Events per bar, onsets rebased to the bar; events crossing a barline
    are split with a tie on the continuation."""
    bar = phrase.bar_length
    bars: list[list[NoteEvent]] = [[] for _ in range(phrase.n_bars)]
    for e in phrase.events:
        start = e.onset
        remaining = e.duration
        tie = e.tie
        while remaining > 0:
            idx = int(start // bar)
            local = start - idx * bar
            chunk = min(remaining, bar - local)
            bars[idx].append(replace(e, onset=local, duration=chunk, tie=tie))
            start += chunk
            remaining -= chunk
            tie = True
    return [tuple(b) for b in bars]


def sample_rhythm(
    corpus: Sequence[Phrase],
    mode: str = "whole-phrase",
    rng: Optional[np.random.Generator] = None,
    measures: int = 2,
) -> Phrase:
    """Draw a rhythmic skeleton from a corpus.

    ``whole-phrase`` strips a uniformly drawn phrase. ``measure-mix``
    concatenates uniformly drawn bars, with the final bar drawn from the
    pool of phrase-ending bars so cadential rhythm stays idiomatic.
    """
    if not corpus:
        raise PhraseValidationError("empty corpus")
    rng = rng if rng is not None else np.random.default_rng()
    if mode == "whole-phrase":
        src = corpus[int(rng.integers(len(corpus)))]
        return strip_to_skeleton(src)
    if mode != "measure-mix":
        raise PhraseValidationError(f"unknown rhythm sampling mode {mode!r}")
    if measures < 1:
        raise PhraseValidationError("measure-mix needs at least one measure")
    ref = corpus[int(rng.integers(len(corpus)))]
    pool = [p for p in corpus if p.meter == ref.meter and len(p.voices) == len(ref.voices)]
    all_bars = [bar for p in pool for bar in split_measures(p) if bar]
    ending_bars = [(p, split_measures(p)[-1]) for p in pool if split_measures(p)[-1]]
    if not all_bars or not ending_bars:
        raise PhraseValidationError("corpus has no usable measures")
    chosen: list[tuple[NoteEvent, ...]] = [
        all_bars[int(rng.integers(len(all_bars)))] for _ in range(measures - 1)
    ]
    final_src, final_bar = ending_bars[int(rng.integers(len(ending_bars)))]
    chosen.append(final_bar)
    bar = ref.bar_length
    events = []
    for i, bar_events in enumerate(chosen):
        for e in bar_events:
            events.append(replace(e, onset=e.onset + i * bar, degree=None, pitch=None))
    # Ties into a fresh bar no longer continue anything; drop leading tie flags.
    events = [replace(e, tie=False) if e.onset % bar == 0 and e.tie else e for e in events]
    return Phrase(
        key=final_src.key,
        meter=ref.meter,
        voices=ref.voices,
        events=tuple(events),
    )
