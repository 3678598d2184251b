"""Fader-style continuous control of symbolic-music attributes.

A Gaussian-mixture VAE disentangles rhythm density and note density into
separate latent spaces, regularizes one dimension of each into a linear
"fader", infers a high-level arousal cluster from the low-level codes with
almost no labels, and supports arousal style transfer by shifting latents
between mixture components.
"""
import os as _os

# Desk-scale matrices are small enough that BLAS threading only adds
# overhead; a single thread is both faster and easier to reproduce.
# Effective only when numpy has not been imported yet.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .corpus import (
    CorpusRecord,
    CorpusSplit,
    arousal_binarize,
    ingest_jsonl,
    ingest_midi,
    record_from_segment,
    save_jsonl,
    split,
    synth_corpus,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import (
    EvalReport,
    consistency_score,
    evaluate,
    fader_sweep,
    linearity_score,
    project_latents,
    restrictiveness_score,
    slide_values,
)
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
from .model import (
    Batch,
    FaderNetModel,
    GaussianMixturePrior,
    LossBreakdown,
    ModelConfig,
    Posterior,
    beta_schedule,
    make_batch,
)
from .tokens import (
    NoteEvent,
    Segment,
    Token,
    TokenSeq,
    decode_tokens,
    encode_tokens,
    quantize_notes,
    segment_stream,
)
from .training import TrainResult, train
from .transfer import ShiftPlan, TransferResult, shift_vector, transfer

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "CorpusRecord",
    "CorpusSplit",
    "Densities",
    "EvalReport",
    "FaderNetModel",
    "GaussianMixturePrior",
    "KeyVector",
    "LossBreakdown",
    "ModelConfig",
    "NoteEvent",
    "NoteLabel",
    "Posterior",
    "RhythmLabel",
    "Segment",
    "ShiftPlan",
    "Token",
    "TokenSeq",
    "TrainResult",
    "TransferResult",
    "arousal_binarize",
    "beta_schedule",
    "consistency_score",
    "decode_tokens",
    "encode_tokens",
    "estimate_key",
    "evaluate",
    "fader_sweep",
    "ingest_jsonl",
    "ingest_midi",
    "linearity_score",
    "load_checkpoint",
    "make_batch",
    "note_density",
    "note_label",
    "project_latents",
    "quantize_notes",
    "record_from_segment",
    "restrictiveness_score",
    "rhythm_density",
    "rhythm_label",
    "save_checkpoint",
    "save_jsonl",
    "segment_stream",
    "shift_vector",
    "slide_values",
    "split",
    "synth_corpus",
    "train",
    "transfer",
]
