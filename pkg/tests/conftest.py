import os

# Keep BLAS single-threaded before numpy loads: faster at these matrix
# sizes and bit-reproducible across runs.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from fadernets.tokens import NoteEvent, Segment


def random_segment(rng: np.random.Generator, max_notes: int = 12) -> Segment:
    """A random valid segment (overlaps resolved by normalization)."""
    notes = []
    for _ in range(int(rng.integers(0, max_notes + 1))):
        pitch = int(rng.integers(21, 109))
        onset = int(rng.integers(0, 16))
        duration = int(rng.integers(1, 17 - onset))
        notes.append(NoteEvent(pitch, onset, duration))
    return Segment.from_notes(notes)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)
