"""Low-level feature labels computed from segments.

Per 16-step segment: a rhythm label (onset / hold / rest per step), a note
label (polyphony count per step, clamped to 15), their scalar densities,
and a 24-way key estimate used as a decoder conditioning signal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySegment
from .tokens import Segment, STEPS_PER_SEGMENT

ONSET, HOLD, REST = 0, 1, 2

RHYTHM_CLASSES = 3
NOTE_CLASSES = 16
KEY_CLASSES = 24
MAX_POLYPHONY = NOTE_CLASSES - 1

# Krumhansl-Kessler tonal-hierarchy profiles ("Cognitive Foundations of
# Musical Pitch", p. 30), index 0 = tonic pitch class.
KK_MAJOR = np.array(
    [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88]
)
KK_MINOR = np.array(
    [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17]
)

KEY_NAMES = [
    f"{root} major" for root in ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
] + [
    f"{root} minor" for root in ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
]


@dataclass(frozen=True)
class RhythmLabel:
    """Per-step categorical rhythm state: 0=onset, 1=hold, 2=rest."""

    steps: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.steps) != STEPS_PER_SEGMENT:
            raise ValueError(f"rhythm label needs {STEPS_PER_SEGMENT} steps")
        if any(s not in (ONSET, HOLD, REST) for s in self.steps):
            raise ValueError("rhythm states must be in {0, 1, 2}")

    def one_hot(self) -> np.ndarray:
        return np.eye(RHYTHM_CLASSES)[list(self.steps)]


@dataclass(frozen=True)
class NoteLabel:
    """Per-step polyphony count in [0, 15]."""

    steps: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.steps) != STEPS_PER_SEGMENT:
            raise ValueError(f"note label needs {STEPS_PER_SEGMENT} steps")
        if any(not 0 <= s <= MAX_POLYPHONY for s in self.steps):
            raise ValueError("polyphony counts must be in [0, 15]")

    def one_hot(self) -> np.ndarray:
        return np.eye(NOTE_CLASSES)[list(self.steps)]


@dataclass(frozen=True)
class KeyVector:
    """One-hot key class: indices 0-11 major C..B, 12-23 minor C..B."""

    index: int

    def __post_init__(self) -> None:
        if not 0 <= self.index < KEY_CLASSES:
            raise ValueError(f"key index {self.index} outside [0, 23]")

    def one_hot(self) -> np.ndarray:
        vec = np.zeros(KEY_CLASSES)
        vec[self.index] = 1.0
        return vec

    @property
    def name(self) -> str:
        return KEY_NAMES[self.index]


@dataclass(frozen=True)
class Densities:
    rhythm_density: float  # fraction of steps carrying an onset, in [0, 1]
    note_density: float  # mean polyphony per step, in [0, 15]


def rhythm_label(segment: Segment) -> RhythmLabel:
    """Onset if any note starts at the step, hold if any is sounding, else rest."""
    states = [REST] * STEPS_PER_SEGMENT
    for n in segment.notes:
        for step in range(n.onset_step, n.end_step):
            if states[step] == REST:
                states[step] = HOLD
    for n in segment.notes:
        states[n.onset_step] = ONSET
    return RhythmLabel(tuple(states))


def note_label(segment: Segment) -> NoteLabel:
    """Per-step count of sounding notes, clamped to 15."""
    counts = [0] * STEPS_PER_SEGMENT
    for n in segment.notes:
        for step in range(n.onset_step, n.end_step):
            counts[step] += 1
    return NoteLabel(tuple(min(c, MAX_POLYPHONY) for c in counts))


def rhythm_density(label: RhythmLabel) -> float:
    return sum(1 for s in label.steps if s == ONSET) / STEPS_PER_SEGMENT


def note_density(label: NoteLabel) -> float:
    return sum(label.steps) / STEPS_PER_SEGMENT


def _pitch_class_histogram(segment: Segment) -> np.ndarray:
    hist = np.zeros(12)
    for n in segment.notes:
        hist[n.pitch % 12] += n.duration_steps
    return hist


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xd = x - x.mean()
    yd = y - y.mean()
    denom = np.sqrt((xd * xd).sum() * (yd * yd).sum())
    if denom == 0.0:
        return 0.0
    return float((xd * yd).sum() / denom)


def estimate_key(segment: Segment) -> KeyVector:
    """Krumhansl-Schmuckler key finding.

    Correlates the duration-weighted pitch-class histogram against the 24
    rotations of the Krumhansl-Kessler major/minor profiles; ties break
    toward the lowest index.
    """
    if not segment.notes:
        raise EmptySegment("key estimation needs at least one note")
    hist = _pitch_class_histogram(segment)
    scores = np.empty(KEY_CLASSES)
    for tonic in range(12):
        rotation = np.roll(KK_MAJOR, tonic)
        scores[tonic] = _pearson(hist, rotation)
        rotation = np.roll(KK_MINOR, tonic)
        scores[12 + tonic] = _pearson(hist, rotation)
    return KeyVector(int(np.argmax(scores)))
