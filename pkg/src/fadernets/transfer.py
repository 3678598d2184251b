"""Arousal style transfer by shifting latents between mixture components."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import record_from_segment
from .errors import UnsupportedInMode
from .labels import Densities, note_density, note_label, rhythm_density, rhythm_label
from .model import FaderNetModel, GaussianMixturePrior
from .tokens import Segment, TokenSeq, decode_tokens


@dataclass
class ShiftPlan:
    target_class: int
    alpha: float
    applied: dict[str, bool]  # per feature: whether its latent was moved


@dataclass
class TransferResult:
    plan: ShiftPlan
    tokens_before: TokenSeq  # plain reconstruction
    tokens_after: TokenSeq
    segment_before: Segment
    segment_after: Segment
    densities_before: Densities
    densities_after: Densities
    clusters_before: dict[str, list[float]]
    clusters_after: dict[str, list[float]]

    def to_dict(self) -> dict:
        def seg(s: Segment) -> list[list[int]]:
            return [[n.pitch, n.onset_step, n.duration_steps] for n in s.notes]

        return {
            "target_class": self.plan.target_class,
            "alpha": self.plan.alpha,
            "applied": self.plan.applied,
            "tokens_before": self.tokens_before.to_ids(),
            "tokens_after": self.tokens_after.to_ids(),
            "notes_before": seg(self.segment_before),
            "notes_after": seg(self.segment_after),
            "densities_before": {
                "rhythm": self.densities_before.rhythm_density,
                "note": self.densities_before.note_density,
            },
            "densities_after": {
                "rhythm": self.densities_after.rhythm_density,
                "note": self.densities_after.note_density,
            },
            "density_delta": {
                "rhythm": self.densities_after.rhythm_density
                - self.densities_before.rhythm_density,
                "note": self.densities_after.note_density
                - self.densities_before.note_density,
            },
            "clusters_before": self.clusters_before,
            "clusters_after": self.clusters_after,
        }


def shift_vector(
    prior: GaussianMixturePrior | None, feature: str, from_c: int, to_c: int
) -> np.ndarray:
    """Difference of component means mu[to] - mu[from] for one feature."""
    if prior is None:
        raise UnsupportedInMode("shift vectors need a mixture prior")
    means = prior.means[feature].data
    k = means.shape[0]
    if not (0 <= from_c < k and 0 <= to_c < k):
        raise IndexError(f"cluster index outside [0, {k})")
    return means[to_c] - means[from_c]


def apply_shift(
    model: FaderNetModel,
    latents: dict[str, np.ndarray],
    target_class: int,
    alpha: float = 1.0,
) -> tuple[dict[str, np.ndarray], ShiftPlan, dict[str, np.ndarray]]:
    """Move each latent not already in the target cluster toward it.

    Membership is the argmax of q(c|z).  Returns the (possibly) shifted
    latents, the plan, and the pre-shift cluster posteriors.
    """
    if model.prior is None:
        raise UnsupportedInMode("transfer requires a mixture-prior model")
    if not 0 <= target_class < model.config.n_clusters:
        raise IndexError(f"target class {target_class} out of range")
    shifted: dict[str, np.ndarray] = {}
    applied: dict[str, bool] = {}
    posteriors: dict[str, np.ndarray] = {}
    for f in model.features:
        z = np.asarray(latents[f])
        q = model.infer_cluster_raw(z, f)
        posteriors[f] = q
        current = int(q[0].argmax())
        if current != target_class:
            vector = shift_vector(model.prior, f, current, target_class)
            shifted[f] = z + alpha * vector
            applied[f] = True
        else:
            shifted[f] = z.copy()
            applied[f] = False
    return shifted, ShiftPlan(target_class, alpha, applied), posteriors


def transfer(
    model: FaderNetModel, segment: Segment, target_class: int, alpha: float = 1.0
) -> TransferResult:
    """Encode, conditionally shift, decode; reports against plain reconstruction."""
    record = record_from_segment(segment)
    latents = model.encode_latents_batch([record])
    keys = record.key.one_hot()[None, :]

    shifted, plan, clusters_before = apply_shift(model, latents, target_class, alpha)
    clusters_after = {
        f: model.infer_cluster_raw(shifted[f], f) for f in model.features
    }

    tokens_before = model.decode_greedy(latents, keys)[0]
    tokens_after = model.decode_greedy(shifted, keys)[0]
    segment_before = decode_tokens(tokens_before)
    segment_after = decode_tokens(tokens_after)

    def densities(s: Segment) -> Densities:
        return Densities(
            rhythm_density(rhythm_label(s)), note_density(note_label(s))
        )

    return TransferResult(
        plan=plan,
        tokens_before=tokens_before,
        tokens_after=tokens_after,
        segment_before=segment_before,
        segment_after=segment_after,
        densities_before=densities(segment_before),
        densities_after=densities(segment_after),
        clusters_before={f: q[0].tolist() for f, q in clusters_before.items()},
        clusters_after={f: q[0].tolist() for f, q in clusters_after.items()},
    )
