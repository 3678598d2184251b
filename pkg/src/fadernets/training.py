"""Deterministic minibatch training loop."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .errors import EmptyCorpus
from .model import FaderNetModel, LossBreakdown, make_batch
from .nn import AdamState, adam_step, zero_grads
from .rng import stream


@dataclass
class TrainResult:
    history: list[LossBreakdown]  # one entry per optimizer step
    zd_ranges: dict[str, tuple[float, float]]
    steps: int


def train(
    model: FaderNetModel,
    records: Sequence,
    seed: int,
    steps: int | None = None,
    progress: Callable[[int, LossBreakdown], None] | None = None,
) -> TrainResult:
    """Run the optimizer for the configured number of steps.

    Labelled and unlabelled records mix freely within each shuffled batch;
    the KL term switches branch per record.  After the loop the model's
    per-feature fader ranges (min/max of the regularized dimension over the
    training set) are computed and stored on the model.
    """
    if not records:
        raise EmptyCorpus("training needs a non-empty corpus")
    cfg = model.config
    total_steps = cfg.train_steps if steps is None else steps
    batch_size = min(cfg.batch_size, len(records))
    if batch_size < 2:
        raise EmptyCorpus("training needs at least two records")

    shuffle_rng = stream("train.shuffle", seed)
    noise_rng = stream("train.noise", seed)
    optimizer = AdamState(learning_rate=cfg.learning_rate)
    params = model.parameters()

    history: list[LossBreakdown] = []
    step = 0
    while step < total_steps:
        order = shuffle_rng.permutation(len(records))
        for start in range(0, len(records) - batch_size + 1, batch_size):
            if step >= total_steps:
                break
            picked = [records[i] for i in order[start : start + batch_size]]
            batch = make_batch(picked, dtype=model.dtype)
            noise = {
                f: noise_rng.standard_normal((batch.size, cfg.z_dim)).astype(model.dtype)
                for f in model.features
            }
            total, breakdown = model.total_loss(batch, step, noise=noise)
            zero_grads(params)
            total.backward()
            adam_step(params, optimizer)
            zero_grads(params)
            history.append(breakdown)
            if progress is not None:
                progress(step, breakdown)
            step += 1

    encoded = model.encode_records(list(records))
    d = cfg.reg_dim
    model.zd_ranges = {
        f: (float(encoded[f][:, d].min()), float(encoded[f][:, d].max()))
        for f in model.features
    }
    return TrainResult(history=history, zd_ranges=model.zd_ranges, steps=step)


def write_loss_csv(history: Sequence[LossBreakdown], path: str | Path) -> None:
    """Write the per-step breakdown atomically (temp file, then rename)."""
    import os
    import tempfile

    fields = [
        "step",
        "reconstruction",
        "kl_rhythm",
        "kl_note",
        "reg_rhythm",
        "reg_note",
        "disc_rhythm",
        "disc_note",
        "beta",
        "total",
    ]
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for i, b in enumerate(history):
                writer.writerow(
                    [
                        i,
                        repr(b.reconstruction),
                        repr(b.kl_rhythm),
                        repr(b.kl_note),
                        repr(b.reg_rhythm),
                        repr(b.reg_note),
                        repr(b.disc_rhythm),
                        repr(b.disc_note),
                        repr(b.beta),
                        repr(b.total),
                    ]
                )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
