"""Event-token codec for quantized 4-beat polyphonic segments.

A segment spans 16 sixteenth-note steps.  Its token form is a flat sequence
of NOTE_ON / NOTE_OFF / TIME_SHIFT events whose shifts sum to exactly 16
steps, capped at 100 tokens.  Integer ids for tensors are frozen as:
PAD=0, START=1, NOTE_ON(p)=2+p, NOTE_OFF(p)=130+p, TIME_SHIFT(n)=258+(n-1).
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

from .errors import InvalidPitch, TokenOverflow

BEATS_PER_SEGMENT = 4
STEP_RESOLUTION = 4
STEPS_PER_SEGMENT = BEATS_PER_SEGMENT * STEP_RESOLUTION
MAX_TOKEN_LEN = 100

PAD_ID = 0
START_ID = 1
NOTE_ON_BASE = 2
NOTE_OFF_BASE = 130
TIME_SHIFT_BASE = 258
VOCAB_SIZE = 274

TokenKind = Literal["note_on", "note_off", "time_shift"]


@dataclass(frozen=True, slots=True)
class Token:
    kind: TokenKind
    value: int

    def to_id(self) -> int:
        if self.kind == "note_on":
            return NOTE_ON_BASE + self.value
        if self.kind == "note_off":
            return NOTE_OFF_BASE + self.value
        return TIME_SHIFT_BASE + (self.value - 1)

    @staticmethod
    def from_id(token_id: int) -> "Token | None":
        """Inverse id mapping; PAD/START and out-of-range ids map to None."""
        if NOTE_ON_BASE <= token_id < NOTE_OFF_BASE:
            return note_on(token_id - NOTE_ON_BASE)
        if NOTE_OFF_BASE <= token_id < TIME_SHIFT_BASE:
            return note_off(token_id - NOTE_OFF_BASE)
        if TIME_SHIFT_BASE <= token_id < VOCAB_SIZE:
            return time_shift(token_id - TIME_SHIFT_BASE + 1)
        return None


def note_on(pitch: int) -> Token:
    return Token("note_on", pitch)


def note_off(pitch: int) -> Token:
    return Token("note_off", pitch)


def time_shift(steps: int) -> Token:
    return Token("time_shift", steps)


@dataclass(frozen=True, slots=True)
class NoteEvent:
    """One quantized note: MIDI pitch, onset step in [0,15], duration in steps."""

    pitch: int
    onset_step: int
    duration_steps: int

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise InvalidPitch(f"pitch {self.pitch} outside [0, 127]")
        if not 0 <= self.onset_step < STEPS_PER_SEGMENT:
            raise ValueError(f"onset step {self.onset_step} outside [0, 15]")
        if self.duration_steps < 1 or self.onset_step + self.duration_steps > STEPS_PER_SEGMENT:
            raise ValueError(
                f"duration {self.duration_steps} at onset {self.onset_step} "
                f"exceeds the {STEPS_PER_SEGMENT}-step segment"
            )

    @property
    def end_step(self) -> int:
        return self.onset_step + self.duration_steps


@dataclass(frozen=True)
class Segment:
    """A 4-beat container of notes, sorted by (onset, pitch).

    Invariants: no duplicate (pitch, onset) pairs, and notes of equal pitch
    never overlap in time (a re-struck pitch ends the previous note), which
    is what makes the token encoding exactly invertible.
    """

    notes: tuple[NoteEvent, ...] = ()

    def __post_init__(self) -> None:
        last_end: dict[int, int] = {}
        previous: NoteEvent | None = None
        for n in self.notes:
            if previous is not None:
                if (n.onset_step, n.pitch) < (previous.onset_step, previous.pitch):
                    raise ValueError("segment notes must be sorted by (onset, pitch)")
                if (n.onset_step, n.pitch) == (previous.onset_step, previous.pitch):
                    raise ValueError(f"duplicate note (pitch {n.pitch}, step {n.onset_step})")
            if n.pitch in last_end and n.onset_step < last_end[n.pitch]:
                raise ValueError(f"overlapping notes at pitch {n.pitch}")
            last_end[n.pitch] = n.end_step
            previous = n

    @classmethod
    def from_notes(cls, notes: Iterable[NoteEvent]) -> "Segment":
        """Normalize an arbitrary note collection into a valid segment.

        Duplicate (pitch, onset) pairs keep the longest duration; a note is
        clipped where the same pitch is struck again.
        """
        best: dict[tuple[int, int], int] = {}
        for n in notes:
            key = (n.pitch, n.onset_step)
            if n.duration_steps > best.get(key, 0):
                best[key] = n.duration_steps
        by_pitch: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for (pitch, onset), duration in best.items():
            by_pitch[pitch].append((onset, duration))
        cleaned: list[NoteEvent] = []
        for pitch, events in by_pitch.items():
            events.sort()
            for i, (onset, duration) in enumerate(events):
                if i + 1 < len(events):
                    duration = min(duration, events[i + 1][0] - onset)
                cleaned.append(NoteEvent(pitch, onset, duration))
        cleaned.sort(key=lambda n: (n.onset_step, n.pitch))
        return cls(tuple(cleaned))

    def __len__(self) -> int:
        return len(self.notes)


@dataclass(frozen=True)
class TokenSeq:
    """Token encoding of a segment; shifts always total 16 steps."""

    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def total_shift(self) -> int:
        return sum(t.value for t in self.tokens if t.kind == "time_shift")

    def to_ids(self) -> list[int]:
        return [t.to_id() for t in self.tokens]

    @classmethod
    def from_ids(cls, ids: Iterable[int]) -> "TokenSeq":
        """Build from integer ids, dropping PAD/START and unknown ids."""
        tokens = [t for t in (Token.from_id(i) for i in ids) if t is not None]
        return cls(tuple(tokens))


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def quantize_notes(
    raw_notes: Sequence[tuple[int, float, float]],
    beats_per_segment: int = BEATS_PER_SEGMENT,
    resolution: int = STEP_RESOLUTION,
) -> Segment:
    """Snap (pitch, onset_beats, duration_beats) notes onto the step grid.

    Onsets round to the nearest step and clamp into the segment; durations
    round with a floor of one step and clip at the segment end.
    """
    steps = beats_per_segment * resolution
    quantized: list[NoteEvent] = []
    for pitch, onset_beats, duration_beats in raw_notes:
        pitch = int(pitch)
        if not 0 <= pitch <= 127:
            raise InvalidPitch(f"pitch {pitch} outside [0, 127]")
        onset = min(max(_round_half_up(onset_beats * resolution), 0), steps - 1)
        duration = max(1, _round_half_up(duration_beats * resolution))
        duration = min(duration, steps - onset)
        quantized.append(NoteEvent(pitch, onset, duration))
    return Segment.from_notes(quantized)


def encode_tokens(segment: Segment) -> TokenSeq:
    """Serialize a segment deterministically.

    At each event step: NOTE_OFFs due (ascending pitch), then NOTE_ONs
    (ascending pitch); single TIME_SHIFT tokens of 1-16 steps advance the
    clock between event steps and pad the sequence out to step 16.
    """
    ons: dict[int, list[int]] = defaultdict(list)
    offs: dict[int, list[int]] = defaultdict(list)
    for n in segment.notes:
        ons[n.onset_step].append(n.pitch)
        offs[n.end_step].append(n.pitch)
    tokens: list[Token] = []
    clock = 0
    for step in sorted(set(ons) | set(offs)):
        if step > clock:
            tokens.append(time_shift(step - clock))
            clock = step
        tokens.extend(note_off(p) for p in sorted(offs.get(step, ())))
        tokens.extend(note_on(p) for p in sorted(ons.get(step, ())))
    if clock < STEPS_PER_SEGMENT:
        tokens.append(time_shift(STEPS_PER_SEGMENT - clock))
    if len(tokens) > MAX_TOKEN_LEN:
        raise TokenOverflow(f"segment encodes to {len(tokens)} tokens (max {MAX_TOKEN_LEN})")
    return TokenSeq(tuple(tokens))


def decode_tokens(tokens: TokenSeq) -> Segment:
    """Tolerant inverse of encode_tokens; never fails.

    Unmatched NOTE_ONs close at step 16, unmatched NOTE_OFFs and zero-length
    notes are dropped, and the clock clamps at 16.
    """
    clock = 0
    pending: dict[int, list[int]] = defaultdict(list)
    raw: list[tuple[int, int, int]] = []

    def close(pitch: int, end: int) -> None:
        onset = pending[pitch].pop(0)
        if end > onset and onset < STEPS_PER_SEGMENT:
            raw.append((pitch, onset, end - onset))

    for tok in tokens.tokens:
        if tok.kind == "time_shift":
            clock = min(STEPS_PER_SEGMENT, clock + tok.value)
        elif tok.kind == "note_on":
            if pending[tok.value]:
                close(tok.value, clock)
            pending[tok.value].append(clock)
        elif pending[tok.value]:
            close(tok.value, clock)
    for pitch in list(pending):
        while pending[pitch]:
            close(pitch, STEPS_PER_SEGMENT)
    return Segment.from_notes(
        NoteEvent(p, onset, duration) for p, onset, duration in raw
    )


def segment_stream(
    notes: Sequence[tuple[int, float, float]], total_beats: float
) -> list[Segment]:
    """Cut a beat-timed note list into consecutive 4-beat segments.

    A note belongs to the window containing its onset; its duration is
    clipped at the window end.
    """
    n_windows = max(0, math.ceil(total_beats / BEATS_PER_SEGMENT))
    if notes:
        last_onset = max(onset for _, onset, _ in notes)
        n_windows = max(n_windows, int(last_onset // BEATS_PER_SEGMENT) + 1)
    windows: list[list[tuple[int, float, float]]] = [[] for _ in range(n_windows)]
    for pitch, onset, duration in notes:
        if onset < 0:
            raise ValueError(f"negative onset {onset}")
        index = int(onset // BEATS_PER_SEGMENT)
        start = index * BEATS_PER_SEGMENT
        clipped = min(duration, start + BEATS_PER_SEGMENT - onset)
        windows[index].append((pitch, onset - start, clipped))
    return [quantize_notes(w) for w in windows]
