"""Compose the shipped sample corpus: short two-voice phrases with
beat-level harmony, smooth treble lines, and clean hard-rule reports.

Each phrase is generated against a target (key, meter, bars, progression
start, cadence, final treble degree) by randomized chord-tone selection
with stepwise preference, then kept only if the package's own rejection
engine accepts it and classifies the intended cadence. Run from the repo
root:

    python3 scripts/make_corpus.py corpus/
"""

from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from gradus.phrase import NoteEvent, Phrase, serialize_phrase
from gradus.pitch import Degree, KeyContext, parse_degree, parse_key
from gradus.rules import (
    ProgressionGrammar,
    chord_tones,
    final_treble_degree,
    reject,
)

GRAMMAR = ProgressionGrammar()


def _letter_distance(a: Degree, b: Degree) -> int:
    d = (a.letter_offset - b.letter_offset) % 7
    return min(d, 7 - d)


def _interval_class(upper: Degree, lower: Degree) -> tuple[int, int]:
    return ((upper.letter_offset - lower.letter_offset) % 7, (upper.semis - lower.semis) % 12)


def _diatonic(number: int, mode: str) -> Degree:
    number = (number - 1) % 7 + 1
    if mode == "minor" and number in (3, 6, 7):
        return Degree(number, -1)
    return Degree(number)


def _passing_degree(a: Degree, b: Degree, mode: str) -> Degree | None:
    d = (b.letter_offset - a.letter_offset) % 7
    if d == 2:
        return _diatonic(a.number + 1, mode)
    if d == 5:  # a third down
        return _diatonic(a.number - 1, mode)
    return None


def compose(
    rng: np.random.Generator,
    key: KeyContext,
    meter: tuple[int, int],
    roots: list[int],
    final_treble: Degree,
    passing_prob: float = 0.35,
) -> Phrase | None:
    """One attempt; None when the treble walk hits a dead end."""
    mode = key.mode
    n_beats = len(roots)
    basses = [chord_tones(r, mode)[0] for r in roots]
    trebles: list[Degree] = []
    for i, r in enumerate(roots):
        options = list(chord_tones(r, mode))
        if i >= n_beats - 2 and r == roots[-1]:
            # Hold the closing treble tone through the final tonic.
            if final_treble not in options:
                return None
            trebles.append(final_treble)
            continue
        legal = []
        for cand in options:
            if trebles:
                prev = trebles[-1]
                ic_prev = _interval_class(prev, basses[i - 1])
                ic_now = _interval_class(cand, basses[i])
                moved = cand != prev and basses[i] != basses[i - 1]
                if moved and ic_prev == ic_now and ic_now in ((4, 7), (0, 0)):
                    continue  # would be parallel perfects
                if len(trebles) >= 2 and trebles[-1] == trebles[-2] == cand:
                    continue  # cap repeated notes at three
            legal.append(cand)
        if not legal:
            return None
        if trebles:
            weights = np.array(
                [1.0 / (1 + _letter_distance(c, trebles[-1]) ** 2) for c in legal]
            )
        else:
            weights = np.ones(len(legal))
        trebles.append(legal[int(rng.choice(len(legal), p=weights / weights.sum()))])

    events: list[NoteEvent] = []
    bar = meter[0]

    # Bass: merge repeated roots within a bar into single longer notes.
    i = 0
    while i < n_beats:
        j = i
        while j + 1 < n_beats and basses[j + 1] == basses[i] and (j + 1) % bar != 0:
            j += 1
        events.append(
            NoteEvent(voice=1, onset=Fraction(i), duration=Fraction(j - i + 1), degree=basses[i])
        )
        i = j + 1

    # Treble: merge within-bar repeats, then sprinkle passing eighths.
    i = 0
    merged: list[tuple[int, int, Degree]] = []
    while i < n_beats:
        j = i
        while (
            j + 1 < n_beats
            and trebles[j + 1] == trebles[i]
            and (j + 1) % bar != 0
            and trebles[i] in chord_tones(roots[j + 1], mode)
        ):
            j += 1
        merged.append((i, j - i + 1, trebles[i]))
        i = j + 1
    for start, dur, deg in merged:
        nxt = start + dur
        passing = None
        if nxt < n_beats and dur == 1 and rng.random() < passing_prob:
            passing = _passing_degree(deg, trebles[nxt], mode)
        if passing is not None:
            events.append(
                NoteEvent(voice=0, onset=Fraction(start), duration=Fraction(1, 2), degree=deg)
            )
            events.append(
                NoteEvent(
                    voice=0, onset=Fraction(start) + Fraction(1, 2),
                    duration=Fraction(1, 2), degree=passing,
                )
            )
        else:
            events.append(
                NoteEvent(voice=0, onset=Fraction(start), duration=Fraction(dur), degree=deg)
            )
    return Phrase(key=key, meter=meter, voices=("treble", "bass"), events=tuple(events))


def make_phrase(seed: int, spec: dict) -> Phrase:
    rng = np.random.default_rng(seed)
    key = parse_key(spec["key"], spec["mode"])
    target_treble = parse_degree(spec["treble"])
    for _ in range(400):
        phrase = compose(rng, key, spec["meter"], spec["roots"], target_treble)
        if phrase is None:
            continue
        if spec.get("lead_rest"):
            events = list(phrase.events)
            first_treble = min(
                (i for i, e in enumerate(events) if e.voice == 0),
                key=lambda i: events[i].onset,
            )
            e = events[first_treble]
            if e.duration >= 1:
                events[first_treble] = NoteEvent(
                    voice=0, onset=e.onset, duration=Fraction(1, 2), degree=Degree(0, 0)
                )
                events.append(
                    NoteEvent(
                        voice=0, onset=e.onset + Fraction(1, 2),
                        duration=e.duration - Fraction(1, 2), degree=e.degree,
                    )
                )
                phrase = Phrase(
                    key=phrase.key, meter=phrase.meter, voices=phrase.voices,
                    events=tuple(events),
                )
        result = reject(phrase, GRAMMAR)
        if not result.accepted:
            continue
        entry = result.entry
        if entry.cadence not in (spec["cadence"], "perfect_authentic"):
            continue
        if spec["cadence"] == "perfect_authentic" and entry.cadence != "perfect_authentic":
            continue
        if final_treble_degree(phrase) != target_treble:
            continue
        if spec.get("start_roots") and not (entry.start_roots & set(spec["start_roots"])):
            continue
        return phrase
    raise RuntimeError(f"could not satisfy spec {spec}")


# Cadence bars end V -> I in root position with the closing tonic held
# for two beats, so closing-gesture rhythm (long duration, mid-bar
# strength) genuinely predicts degree content. The specs vary key,
# length, meter, opening harmony, and the closing treble degree so every
# fusion slot type is represented several times.
SPECS = [
    dict(key="C", mode="major", meter=(4, 4), roots=[1, 1, 4, 5, 1, 5, 1, 1], treble="3", cadence="authentic"),
    dict(key="C", mode="major", meter=(4, 4), roots=[1, 6, 2, 5, 4, 5, 1, 1], treble="1", cadence="perfect_authentic"),
    dict(key="C", mode="major", meter=(4, 4), roots=[5, 1, 6, 2, 5, 5, 1, 1], treble="5", cadence="authentic", start_roots=[5]),
    dict(key="C", mode="major", meter=(4, 4), roots=[1, 4, 5, 6, 2, 5, 1, 1], treble="3", cadence="authentic"),
    dict(key="C", mode="major", meter=(4, 4), roots=[4, 5, 1, 6, 4, 5, 1, 1], treble="5", cadence="authentic", start_roots=[4]),
    dict(key="C", mode="major", meter=(4, 4), roots=[1, 1, 6, 4, 5, 5, 1, 1], treble="1", cadence="perfect_authentic"),
    dict(key="C", mode="major", meter=(4, 4), roots=[2, 5, 1, 1, 4, 5, 1, 1], treble="5", cadence="authentic", start_roots=[2]),
    dict(key="C", mode="major", meter=(4, 4), roots=[1, 3, 4, 5, 6, 5, 1, 1], treble="3", cadence="authentic", lead_rest=True),
    dict(key="G", mode="major", meter=(4, 4), roots=[1, 4, 5, 1, 2, 5, 1, 1], treble="1", cadence="perfect_authentic"),
    dict(key="G", mode="major", meter=(4, 4), roots=[1, 1, 2, 5, 4, 5, 1, 1], treble="3", cadence="authentic"),
    dict(key="G", mode="major", meter=(4, 4), roots=[5, 1, 4, 5, 2, 5, 1, 1], treble="5", cadence="authentic", start_roots=[5]),
    dict(key="F", mode="major", meter=(4, 4), roots=[1, 6, 4, 5, 1, 5, 1, 1], treble="1", cadence="perfect_authentic"),
    dict(key="F", mode="major", meter=(4, 4), roots=[1, 2, 5, 1, 4, 5, 1, 1], treble="3", cadence="authentic", lead_rest=True),
    dict(key="D", mode="major", meter=(4, 4), roots=[1, 4, 2, 5, 6, 5, 1, 1], treble="3", cadence="authentic"),
    dict(key="D", mode="major", meter=(4, 4), roots=[1, 1, 4, 5, 6, 2, 5, 1, 1, 4, 2, 5, 5, 5, 1, 1], treble="1", cadence="perfect_authentic"),
    dict(key="C", mode="major", meter=(3, 4), roots=[1, 4, 5, 5, 1, 1], treble="3", cadence="authentic"),
    dict(key="G", mode="major", meter=(3, 4), roots=[1, 6, 2, 5, 1, 1], treble="1", cadence="perfect_authentic"),
    dict(key="A", mode="minor", meter=(4, 4), roots=[1, 1, 4, 5, 6, 5, 1, 1], treble="1", cadence="perfect_authentic"),
    dict(key="A", mode="minor", meter=(4, 4), roots=[1, 4, 2, 5, 1, 5, 1, 1], treble="b3", cadence="authentic"),
    dict(key="D", mode="minor", meter=(4, 4), roots=[1, 6, 4, 5, 2, 5, 1, 1], treble="5", cadence="authentic"),
]


def main() -> None:
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "corpus")
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, spec in enumerate(SPECS):
        phrase = make_phrase(1000 + i, spec)
        name = f"{i:02d}_{spec['key'].lower()}{'m' if spec['mode'] == 'minor' else ''}.phrase.json"
        (out_dir / name).write_text(serialize_phrase(phrase))
        print(f"{name}: {len(phrase.events)} events, cadence {spec['cadence']}, treble {spec['treble']}")


if __name__ == "__main__":
    main()
