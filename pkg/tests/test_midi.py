import numpy as np
import pytest

from gradus.errors import PhraseValidationError
from gradus.fusion import Score, default_profiles, default_templates, fuse, realize_pitches
from gradus.library import PhraseLibrary
from gradus.midi import (
    TICKS_PER_QUARTER,
    _read_vlq,
    _vlq,
    read_midi_notes,
    score_note_events,
    write_midi,
)
from gradus.pitch import parse_key
from gradus.rules import ProgressionGrammar

from conftest import make_phrase


def _score_of(phrase):
    return Score(home_key=phrase.key, phrases=(realize_pitches(phrase, default_profiles(phrase.voices)),))


def test_vlq_round_trip():
    for value in (0, 1, 127, 128, 255, 16383, 16384, 100000):
        data = _vlq(value)
        got, end = _read_vlq(data, 0)
        assert got == value
        assert end == len(data)


def test_one_note_midi():
    score = _score_of(make_phrase([(0, 0, 1, "1")], voices=("treble",)))
    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "one.mid")
        write_midi(score, path)
        tracks = read_midi_notes(path)
    assert len(tracks) == 1
    assert tracks[0] == [(72, 0, TICKS_PER_QUARTER)]  # C5: the tonic placement nearest central G4


def test_rests_emit_no_notes():
    score = _score_of(make_phrase([(0, 0, 1, "rest"), (0, 1, 1, "1")], voices=("treble",)))
    events = score_note_events(score)
    assert len(events) == 1
    assert events[0][1] == TICKS_PER_QUARTER  # onset after the rest


def test_empty_score_error():
    score = _score_of(make_phrase([(0, 0, 1, "rest")], voices=("treble",)))
    with pytest.raises(PhraseValidationError):
        score_note_events(score)


def test_unrealized_score_error():
    phrase = make_phrase([(0, 0, 1, "1")], voices=("treble",))
    score = Score(home_key=phrase.key, phrases=(phrase,))
    with pytest.raises(PhraseValidationError, match="realiz"):
        score_note_events(score)


def test_unrepresentable_duration():
    phrase = make_phrase([(0, 0, "1/7", "1")], voices=("treble",))
    score = Score(home_key=phrase.key, phrases=(realize_pitches(phrase, default_profiles(("t",))),))
    with pytest.raises(PhraseValidationError):
        score_note_events(score)


def test_round_trip_fused_fixture(corpus, tmp_path):
    library, _ = PhraseLibrary.build(corpus)
    score, _ = fuse(
        default_templates()[0], library, default_profiles(("treble", "bass")),
        ProgressionGrammar(), np.random.default_rng(3), parse_key("C", "major"),
    )
    path = tmp_path / "fused.mid"
    write_midi(score, path)
    tracks = read_midi_notes(path)
    want = [[] for _ in range(2)]
    for voice, start, dur, pitch in score_note_events(score):
        want[voice].append((pitch, start, dur))
    for voice in range(2):
        assert tracks[voice] == sorted(want[voice])


def test_meter_denominator_scaling():
    # In 6/8 a "beat" is an eighth: 240 ticks.
    phrase = make_phrase([(0, 0, 1, "1"), (0, 1, 2, "2")], voices=("treble",), meter=(6, 8))
    score = _score_of(phrase)
    events = score_note_events(score)
    assert events[0][2] == 240
    assert events[1][1] == 240 and events[1][2] == 480


def test_repeated_pitch_restrikes(tmp_path):
    phrase = make_phrase([(0, 0, 1, "1"), (0, 1, 1, "1"), (0, 2, 1, "1")], voices=("t",))
    score = _score_of(phrase)
    path = tmp_path / "re.mid"
    write_midi(score, path)
    (track,) = read_midi_notes(path)
    assert len(track) == 3
    assert [t[1] for t in track] == [0, 480, 960]
    assert all(t[2] == 480 for t in track)
