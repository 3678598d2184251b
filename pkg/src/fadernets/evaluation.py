"""Controllability evaluation: fader sweeps and the three scores.

The sweep encodes held-out records, slides the regularized dimension of one
feature's latent across its training-set range, greedy-decodes every
combination, and measures output densities.  Consistency and
restrictiveness are 1 minus an average population standard deviation (note
density is normalized by 16 so both features share the scale); linearity is
the R-squared of a pooled univariate least-squares fit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import EmptyCorpus, InsufficientSamples, InvalidSweep
from .labels import (
    MAX_POLYPHONY,
    note_density,
    note_label,
    rhythm_density,
    rhythm_label,
)
from .rng import stream

NOTE_DENSITY_SCALE = MAX_POLYPHONY + 1  # normalizes note density into [0, 1]


class SweepableModel(Protocol):
    """What fader_sweep needs from a model (or test stub)."""

    features: tuple[str, ...]
    reg_dim: int

    def zd_range(self, feature: str) -> tuple[float, float]: ...

    def encode_latents_batch(self, records: Sequence) -> dict[str, np.ndarray]: ...

    def decode_segments(
        self, latents: dict[str, np.ndarray], key_onehot: np.ndarray
    ) -> list: ...


@dataclass
class SweepResult:
    feature: str
    slid_values: np.ndarray  # [T]
    rhythm_density: np.ndarray  # [M, T], raw in [0, 1]
    note_density: np.ndarray  # [M, T], raw in [0, 15]
    sample_indices: list[int]


@dataclass
class FeatureScores:
    consistency: float
    restrictiveness: float
    linearity: float


@dataclass
class EvalReport:
    scores: dict[str, FeatureScores]
    t_steps: int
    m_samples: int
    seed: int
    checkpoint_id: str

    def to_dict(self) -> dict:
        return {
            "scores": {
                f: {
                    "consistency": s.consistency,
                    "restrictiveness": s.restrictiveness,
                    "linearity": s.linearity,
                }
                for f, s in self.scores.items()
            },
            "t_steps": self.t_steps,
            "m_samples": self.m_samples,
            "seed": self.seed,
            "checkpoint_id": self.checkpoint_id,
        }

    def csv_rows(self) -> list[list]:
        rows = []
        for f, s in self.scores.items():
            rows.append(
                [
                    self.checkpoint_id,
                    f,
                    s.consistency,
                    s.restrictiveness,
                    s.linearity,
                    self.t_steps,
                    self.m_samples,
                    self.seed,
                ]
            )
        return rows

    CSV_HEADER = [
        "checkpoint_id",
        "feature",
        "consistency",
        "restrictiveness",
        "linearity",
        "t_steps",
        "m_samples",
        "seed",
    ]


def slide_values(z_min: float, z_max: float, t_steps: int = 8) -> np.ndarray:
    """min + (t/T)(max - min) for t in 1..T; the minimum itself is excluded."""
    if t_steps < 2:
        raise InvalidSweep("a sweep needs at least two steps")
    if z_min > z_max:
        raise InvalidSweep(f"empty range [{z_min}, {z_max}]")
    t = np.arange(1, t_steps + 1, dtype=np.float64)
    return z_min + (t / t_steps) * (z_max - z_min)


def fader_sweep(
    model: SweepableModel,
    test_records: Sequence,
    feature: str,
    t_steps: int = 8,
    m_samples: int = 100,
    seed: int = 0,
) -> SweepResult:
    """Slide one feature's fader over sampled records; densities of the outputs."""
    if not test_records:
        raise EmptyCorpus("sweep needs a non-empty test set")
    rng = stream(f"eval.sample.{feature}", seed)
    m = min(m_samples, len(test_records))
    indices = rng.choice(len(test_records), size=m, replace=False).tolist()
    picked = [test_records[i] for i in indices]

    latents = model.encode_latents_batch(picked)
    values = slide_values(*model.zd_range(feature), t_steps)
    keys = np.array([r.key.one_hot() for r in picked])

    # One big decode batch, t-major: block t holds all m samples at value t.
    tiled = {f: np.tile(z, (t_steps, 1)) for f, z in latents.items()}
    swept = tiled[feature]
    for t, value in enumerate(values):
        swept[t * m : (t + 1) * m, model.reg_dim] = value
    segments = model.decode_segments(tiled, np.tile(keys, (t_steps, 1)))

    r_matrix = np.empty((m, t_steps))
    n_matrix = np.empty((m, t_steps))
    for t in range(t_steps):
        for i in range(m):
            segment = segments[t * m + i]
            r_matrix[i, t] = rhythm_density(rhythm_label(segment))
            n_matrix[i, t] = note_density(note_label(segment))
    return SweepResult(
        feature=feature,
        slid_values=values,
        rhythm_density=r_matrix,
        note_density=n_matrix,
        sample_indices=indices,
    )


def consistency_score(values: np.ndarray) -> float:
    """1 - mean over sweep positions of the across-sample deviation."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < 2:
        raise InsufficientSamples("consistency needs at least two samples")
    return float(1.0 - values.std(axis=0).mean())


def restrictiveness_score(values: np.ndarray) -> float:
    """1 - mean over samples of the along-sweep deviation."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[1] < 2:
        raise InsufficientSamples("restrictiveness needs at least two sweep steps")
    return float(1.0 - values.std(axis=1).mean())


def linearity_score(pairs: Sequence[tuple[float, float]]) -> float:
    """R-squared of an ordinary-least-squares line through the pooled pairs."""
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[0] < 3:
        raise InsufficientSamples("linearity needs at least three pairs")
    x, y = pairs[:, 0], pairs[:, 1]
    x_mean, y_mean = x.mean(), y.mean()
    ss_tot = ((y - y_mean) ** 2).sum()
    if ss_tot < 1e-12:
        return 0.0
    var_x = ((x - x_mean) ** 2).sum()
    if var_x < 1e-12:
        return 0.0
    slope = ((x - x_mean) * (y - y_mean)).sum() / var_x
    intercept = y_mean - slope * x_mean
    residuals = y - (slope * x + intercept)
    return float(1.0 - (residuals**2).sum() / ss_tot)


def _sweep_pairs(result: SweepResult, own: np.ndarray) -> list[tuple[float, float]]:
    t_steps = len(result.slid_values)
    pairs = []
    for i in range(own.shape[0]):
        for t in range(t_steps):
            pairs.append((float(result.slid_values[t]), float(own[i, t])))
    return pairs


def evaluate(
    model: SweepableModel,
    test_records: Sequence,
    t_steps: int = 8,
    m_samples: int = 100,
    seed: int = 0,
    checkpoint_id: str = "",
) -> EvalReport:
    """Sweep every feature and assemble the three scores per feature."""
    scores: dict[str, FeatureScores] = {}
    for feature in model.features:
        result = fader_sweep(model, test_records, feature, t_steps, m_samples, seed)
        if feature == "note":
            own_raw = result.note_density
            own_norm = result.note_density / NOTE_DENSITY_SCALE
            other_norm = result.rhythm_density
        else:
            own_raw = result.rhythm_density
            own_norm = result.rhythm_density
            other_norm = result.note_density / NOTE_DENSITY_SCALE
        scores[feature] = FeatureScores(
            consistency=consistency_score(own_norm),
            restrictiveness=restrictiveness_score(other_norm),
            linearity=linearity_score(_sweep_pairs(result, own_raw)),
        )
    return EvalReport(
        scores=scores,
        t_steps=t_steps,
        m_samples=m_samples,
        seed=seed,
        checkpoint_id=checkpoint_id,
    )


def project_latents(
    z_set: Sequence[np.ndarray] | np.ndarray, labels: Sequence
) -> list[tuple[float, float, object]]:
    """Center the vectors and project onto the top two principal components.

    Component signs are fixed (largest-magnitude coordinate positive) so the
    projection is deterministic for a given input order.
    """
    z = np.asarray(z_set, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise InsufficientSamples("projection needs at least two vectors")
    centered = z - z.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / z.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:2]
    components = eigenvectors[:, order]
    if components.shape[1] < 2:  # 1-D input degenerates to a single axis
        components = np.pad(components, ((0, 0), (0, 2 - components.shape[1])))
    for j in range(2):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]
    projected = centered @ components
    return [
        (float(projected[i, 0]), float(projected[i, 1]), labels[i])
        for i in range(z.shape[0])
    ]
