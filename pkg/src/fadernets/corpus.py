"""Corpus construction: synthetic generation, JSONL and MIDI ingestion, splits.

A corpus record bundles a segment with everything training needs: its token
encoding, rhythm/note labels, key vector, scalar densities, and the optional
arousal annotation.  The synthetic generator builds two classes whose
density structure mirrors the high/low-arousal correspondence (class 1:
dense rhythm, thin polyphony; class 0: sparse rhythm, thick polyphony), so
clustering claims are testable at desk scale.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySegment, InvalidLabel, ParseError, TokenOverflow
from .labels import (
    Densities,
    KeyVector,
    NoteLabel,
    RhythmLabel,
    estimate_key,
    note_density,
    note_label,
    rhythm_density,
    rhythm_label,
)
from .midi import midi_to_notes
from .rng import stream
from .tokens import (
    NoteEvent,
    Segment,
    STEPS_PER_SEGMENT,
    TokenSeq,
    encode_tokens,
    segment_stream,
)

MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
MINOR_SCALE = (0, 2, 3, 5, 7, 8, 10)


@dataclass
class CorpusRecord:
    segment: Segment
    tokens: TokenSeq
    y_rhythm: RhythmLabel
    y_note: NoteLabel
    key: KeyVector
    densities: Densities
    arousal_raw: float | None = None
    arousal_class: int | None = None
    token_ids: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.token_ids:
            self.token_ids = self.tokens.to_ids()

    @property
    def arousal_truth(self) -> int | None:
        """Ground-truth class from the raw annotation, labelled or not."""
        if self.arousal_raw is None:
            return None
        return arousal_binarize(self.arousal_raw)


@dataclass
class CorpusSplit:
    train: list[CorpusRecord]
    validation: list[CorpusRecord]
    test: list[CorpusRecord]
    seed: int


@dataclass
class IngestResult:
    records: list[CorpusRecord]
    skipped_overflow: int


def arousal_binarize(raw: float) -> int | None:
    """Positive ratings map to class 1, negative to 0; |raw| <= 0.1 is ambiguous."""
    if not -1.0 <= raw <= 1.0:
        raise InvalidLabel(f"arousal {raw} outside [-1, 1]")
    if raw > 0.1:
        return 1
    if raw < -0.1:
        return 0
    return None


def record_from_segment(
    segment: Segment,
    arousal_raw: float | None = None,
    arousal_class: int | None = None,
) -> CorpusRecord:
    """Compute every label from the segment; raises TokenOverflow when too long."""
    tokens = encode_tokens(segment)
    y_rhythm = rhythm_label(segment)
    y_note = note_label(segment)
    try:
        key = estimate_key(segment)
    except EmptySegment:
        key = KeyVector(0)
    return CorpusRecord(
        segment=segment,
        tokens=tokens,
        y_rhythm=y_rhythm,
        y_note=y_note,
        key=key,
        densities=Densities(rhythm_density(y_rhythm), note_density(y_note)),
        arousal_raw=arousal_raw,
        arousal_class=arousal_class,
    )


def _scale_pitches(tonic: int, minor: bool) -> list[int]:
    intervals = MINOR_SCALE if minor else MAJOR_SCALE
    pitches = []
    for octave in range(3, 7):  # C3..B6, a comfortable piano register
        for step in intervals:
            pitches.append(12 * octave + tonic + step)
    return [p for p in pitches if 0 <= p <= 127]


def _synth_segment(rng: np.random.Generator, cls: int) -> Segment:
    """One segment realizing the class's rhythm-density and polyphony targets."""
    if cls == 1:
        rd_target = rng.uniform(0.5, 0.9)
        poly_target = rng.uniform(1.0, 2.0)
    else:
        rd_target = rng.uniform(0.1, 0.4)
        poly_target = rng.uniform(3.0, 6.0)
    n_onsets = max(1, round(rd_target * STEPS_PER_SEGMENT))
    extra = rng.choice(STEPS_PER_SEGMENT - 1, size=n_onsets - 1, replace=False) + 1
    onsets = sorted([0] + extra.tolist())

    tonic = int(rng.integers(0, 12))
    minor = bool(rng.integers(0, 2))
    scale = _scale_pitches(tonic, minor)
    base = int(rng.integers(7, len(scale) - 14))

    notes: list[NoteEvent] = []
    for i, onset in enumerate(onsets):
        next_onset = onsets[i + 1] if i + 1 < len(onsets) else STEPS_PER_SEGMENT
        duration = next_onset - onset
        size = int(poly_target) + (1 if rng.random() < poly_target % 1.0 else 0)
        size = max(1, size)
        degree = base + int(rng.integers(-3, 4))
        for voice in range(size):
            pitch = scale[degree + 2 * voice]  # stacked thirds within the scale
            notes.append(NoteEvent(pitch, onset, duration))
    return Segment.from_notes(notes)


def synth_corpus(
    n_segments: int, labelled_fraction: float = 0.01, seed: int = 0
) -> list[CorpusRecord]:
    """Deterministic two-class corpus with class-separated densities.

    Every record keeps its raw arousal value as ground truth; the binarized
    class survives only on a labelled subset of ceil(n * fraction) records
    (at least one per class).
    """
    if n_segments < 100:
        raise ValueError("synthetic corpora need at least 100 segments")
    rng = stream("corpus", seed)
    records: list[CorpusRecord] = []
    classes: list[int] = []
    for _ in range(n_segments):
        cls = int(rng.integers(0, 2))
        segment = _synth_segment(rng, cls)
        raw = float(rng.uniform(0.2, 1.0))
        raw = raw if cls == 1 else -raw
        records.append(record_from_segment(segment, arousal_raw=raw, arousal_class=cls))
        classes.append(cls)

    n_labelled = max(1, math.ceil(n_segments * labelled_fraction)) if labelled_fraction > 0 else 0
    chosen: set[int] = set()
    if n_labelled:
        chosen = set(rng.choice(n_segments, size=n_labelled, replace=False).tolist())
        for cls in (0, 1):
            if all(classes[i] != cls for i in chosen):
                candidates = [i for i, c in enumerate(classes) if c == cls]
                if candidates:
                    swap_out = next(i for i in sorted(chosen) if classes[i] != cls)
                    chosen.discard(swap_out)
                    chosen.add(candidates[0])
    for i, record in enumerate(records):
        if i not in chosen:
            record.arousal_class = None
    return records


def split(records: Sequence[CorpusRecord], seed: int) -> CorpusSplit:
    """Seeded shuffle, then an 80/10/10 partition (train absorbs remainders)."""
    if len(records) < 10:
        raise ValueError("splitting needs at least 10 records")
    rng = stream("split", seed)
    order = rng.permutation(len(records))
    n = len(records)
    n_hold = n // 10
    n_train = n - 2 * n_hold
    shuffled = [records[i] for i in order]
    return CorpusSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_hold],
        test=shuffled[n_train + n_hold :],
        seed=seed,
    )


def ingest_jsonl(path: str | Path) -> IngestResult:
    """Read a JSONL corpus; one object per line.

    Schema: {"notes": [[pitch, onset_step, duration_steps], ...],
             "arousal": optional float in [-1, 1],
             "labelled": optional bool (default true)}.
    Records whose token encoding would overflow are skipped and counted.
    """
    records: list[CorpusRecord] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                notes = [
                    NoteEvent(int(p), int(o), int(d)) for p, o, d in obj.get("notes", [])
                ]
                segment = Segment.from_notes(notes)
                raw = obj.get("arousal")
                labelled = obj.get("labelled", True)
            except (ValueError, TypeError, KeyError) as exc:
                raise ParseError(line_no, str(exc)) from exc
            arousal_class = None
            if raw is not None:
                raw = float(raw)
                if labelled:
                    arousal_class = arousal_binarize(raw)
            try:
                records.append(
                    record_from_segment(segment, arousal_raw=raw, arousal_class=arousal_class)
                )
            except TokenOverflow:
                skipped += 1
    return IngestResult(records=records, skipped_overflow=skipped)


def save_jsonl(records: Iterable[CorpusRecord], path: str | Path) -> None:
    """Write records in the ingest_jsonl schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj: dict = {
                "notes": [[n.pitch, n.onset_step, n.duration_steps] for n in r.segment.notes]
            }
            if r.arousal_raw is not None:
                obj["arousal"] = r.arousal_raw
                obj["labelled"] = r.arousal_class is not None
            fh.write(json.dumps(obj) + "\n")


def ingest_midi(data: bytes) -> IngestResult:
    """Segment an SMF byte string into 4-beat records (no arousal labels)."""
    parsed = midi_to_notes(data)
    records: list[CorpusRecord] = []
    skipped = 0
    for segment in segment_stream(parsed.notes, parsed.total_beats):
        try:
            records.append(record_from_segment(segment))
        except TokenOverflow:
            skipped += 1
    return IngestResult(records=records, skipped_overflow=skipped)
