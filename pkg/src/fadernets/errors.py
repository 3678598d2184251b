"""Domain error types shared across the package."""


class FadersError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidPitch(FadersError):
    """MIDI pitch outside [0, 127]."""


class TokenOverflow(FadersError):
    """Token encoding of a segment exceeds the maximum sequence length."""


class EmptySegment(FadersError):
    """Operation requires a segment containing at least one note."""


class ShapeError(FadersError):
    """Tensor shapes disagree with an operation's contract."""


class UnsupportedInMode(FadersError):
    """Operation is not available under the model's current mode."""


class BatchTooSmall(FadersError):
    """Batch-level loss requires at least two records."""


class EmptyCorpus(FadersError):
    """Operation requires a non-empty record collection."""


class InvalidLabel(FadersError):
    """Arousal annotation outside the legal [-1, 1] range."""


class MalformedMidi(FadersError):
    """Input bytes are not a parsable Standard MIDI File."""


class ParseError(FadersError):
    """A corpus line failed to parse; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvalidSweep(FadersError):
    """Fader sweep parameters are out of contract."""


class InsufficientSamples(FadersError):
    """Score computation received too few samples."""
