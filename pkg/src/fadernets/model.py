"""The fader-controlled sequence model.

Per low-level feature (rhythm, note) a GRU encoder maps token sequences to
a diagonal-Gaussian posterior whose sampled code feeds three consumers: a
GRU discriminator that must reconstruct the feature's 16-step label, a
shared GRU decoder that reconstructs the token sequence conditioned on all
codes plus the key vector, and (in the mixture mode) a Gaussian-mixture
prior over which a cluster posterior is inferred.  One designated latent
dimension per feature is regularized to track that feature's scalar
density, which is what turns it into a usable fader.

Modes: "gm_vae" (mixture prior, two-branch KL), "vanilla_vae" (standard
normal KL, no cluster machinery), "ablation_single_latent" (one encoder,
no discriminators or regularization, mixture prior on the single code).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import (
    BatchTooSmall,
    EmptyCorpus,
    TokenOverflow,
    UnsupportedInMode,
)
from .labels import KEY_CLASSES, NOTE_CLASSES, RHYTHM_CLASSES
from .nn import Embedding, GruCell, Linear, gru_sequence_flat, gru_step_raw, xavier_uniform
from .rng import stream
from .tokens import (
    MAX_TOKEN_LEN,
    PAD_ID,
    START_ID,
    STEPS_PER_SEGMENT,
    TIME_SHIFT_BASE,
    TokenSeq,
    VOCAB_SIZE,
)

MODES = ("gm_vae", "vanilla_vae", "ablation_single_latent")
FEATURES = ("rhythm", "note")
FEATURE_CLASSES = {"rhythm": RHYTHM_CLASSES, "note": NOTE_CLASSES}

CONFIG_SCHEMA_VERSION = 1


def beta_schedule(
    step: int, start_steps: int = 1000, ramp_steps: int = 10000, beta_max: float = 0.2
) -> float:
    """KL weight: zero during warmup, then a linear ramp up to beta_max."""
    if step < start_steps:
        return 0.0
    if step >= start_steps + ramp_steps:
        return beta_max
    return beta_max * (step - start_steps) / ramp_steps


@dataclass
class ModelConfig:
    mode: str = "gm_vae"
    n_clusters: int = 2
    vocab_size: int = VOCAB_SIZE
    max_token_len: int = MAX_TOKEN_LEN
    label_len: int = STEPS_PER_SEGMENT
    z_dim: int = 16
    hidden_dim: int = 64
    embedding_dim: int = 32
    batch_size: int = 32
    beta_start_steps: int = 1000
    beta_ramp_steps: int = 10000
    beta_max: float = 0.2
    prior_variance: float = math.exp(-2)
    learning_rate: float = 1e-3
    reg_dim: int = 0
    reg_weight: float = 1.0
    log_sigma_init: float = -2.0
    train_steps: int = 4000
    scale: str = "desk"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.z_dim < 2:
            raise ValueError("z_dim must be at least 2")
        if not 0 <= self.reg_dim < self.z_dim:
            raise ValueError("reg_dim must index into the latent")
        if self.n_clusters < 2:
            raise ValueError("need at least two clusters")

    def beta(self, step: int) -> float:
        return beta_schedule(step, self.beta_start_steps, self.beta_ramp_steps, self.beta_max)

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        """CPU-trainable preset exercising every code path in minutes."""
        values = dict(
            z_dim=16,
            hidden_dim=64,
            embedding_dim=32,
            batch_size=32,
            beta_start_steps=400,
            beta_ramp_steps=2000,
            train_steps=4000,
            scale="desk",
        )
        values.update(overrides)
        return cls(**values)

    @classmethod
    def paper(cls, **overrides) -> "ModelConfig":
        """Full-scale preset (not CPU-friendly; kept for reference)."""
        values = dict(
            z_dim=128,
            hidden_dim=512,
            embedding_dim=512,
            batch_size=128,
            beta_start_steps=1000,
            beta_ramp_steps=10000,
            train_steps=30000,
            scale="paper",
        )
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["schema_version"] = CONFIG_SCHEMA_VERSION
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        version = data.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema version {version}")
        return cls(**data)


@dataclass
class GaussianMixturePrior:
    """Learnable component means with a shared fixed variance; p(c) uniform."""

    means: dict[str, Parameter]  # feature -> [K, z_dim]
    variance: float
    n_clusters: int

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class Posterior:
    mu: Tensor
    log_sigma: Tensor
    z: Tensor
    z_d: Tensor  # [B, 1] column at the regularized dimension


@dataclass
class Batch:
    token_ids: np.ndarray  # [B, T] int, PAD-padded
    lengths: np.ndarray  # [B]
    rhythm_steps: np.ndarray  # [B, 16]
    note_steps: np.ndarray  # [B, 16]
    key_onehot: np.ndarray  # [B, 24]
    rhythm_density: np.ndarray  # [B]
    note_density: np.ndarray  # [B]
    cluster_labels: np.ndarray  # [B]; -1 where unlabelled

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    def label_steps(self, feature: str) -> np.ndarray:
        return self.rhythm_steps if feature == "rhythm" else self.note_steps

    def density(self, feature: str) -> np.ndarray:
        return self.rhythm_density if feature == "rhythm" else self.note_density


def make_batch(records: Sequence, dtype=np.float32) -> Batch:
    """Assemble aligned arrays from corpus records (see corpus.CorpusRecord)."""
    if not records:
        raise EmptyCorpus("cannot build a batch from zero records")
    lengths = np.array([len(r.tokens) for r in records], dtype=np.int64)
    width = int(lengths.max())
    ids = np.full((len(records), width), PAD_ID, dtype=np.int64)
    for i, r in enumerate(records):
        ids[i, : lengths[i]] = r.token_ids
    return Batch(
        token_ids=ids,
        lengths=lengths,
        rhythm_steps=np.array([r.y_rhythm.steps for r in records], dtype=np.int64),
        note_steps=np.array([r.y_note.steps for r in records], dtype=np.int64),
        key_onehot=np.array([r.key.one_hot() for r in records], dtype=dtype),
        rhythm_density=np.array([r.densities.rhythm_density for r in records], dtype=dtype),
        note_density=np.array([r.densities.note_density for r in records], dtype=dtype),
        cluster_labels=np.array(
            [r.arousal_class if r.arousal_class is not None else -1 for r in records],
            dtype=np.int64,
        ),
    )


@dataclass
class LossBreakdown:
    """Scalar loss components of one training step.

    total = reconstruction + beta * (kl_rhythm + kl_note)
          + reg_rhythm + reg_note + disc_rhythm + disc_note
    where the reg fields already include the configured regularization
    weight.  In ablation mode the single latent's KL is reported under
    kl_rhythm and the remaining per-feature fields are zero.
    """

    reconstruction: float
    kl_rhythm: float
    kl_note: float
    reg_rhythm: float
    reg_note: float
    disc_rhythm: float
    disc_note: float
    beta: float
    total: float


class FaderNetModel:
    def __init__(self, config: ModelConfig, seed: int, dtype=np.float32):
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype).type
        self.zd_ranges: dict[str, tuple[float, float]] | None = None
        self._params: dict[str, Parameter] = {}
        rng = stream("init", seed)

        def register(params: Iterable[Parameter]) -> None:
            for p in params:
                if p.name in self._params:
                    raise ValueError(f"duplicate parameter {p.name}")
                self._params[p.name] = p

        cfg = config
        self.embedding = Embedding.create("embedding", cfg.vocab_size, cfg.embedding_dim, rng, dtype)
        register(self.embedding.parameters())

        self.encoder_gru: dict[str, GruCell] = {}
        self.encoder_mu: dict[str, Linear] = {}
        self.encoder_log_sigma: dict[str, Linear] = {}
        for f in self.features:
            gru = GruCell.create(f"encoder.{f}.gru", cfg.embedding_dim, cfg.hidden_dim, rng, dtype)
            mu = Linear.create(f"encoder.{f}.mu", cfg.hidden_dim, cfg.z_dim, rng, dtype)
            ls = Linear.create(f"encoder.{f}.log_sigma", cfg.hidden_dim, cfg.z_dim, rng, dtype)
            # Start posteriors narrow: a wide sigma early on blurs the
            # regularized dimension and bakes a step response into the
            # decoder that later training is slow to undo.
            ls.bias.data[...] = cfg.log_sigma_init
            self.encoder_gru[f] = gru
            self.encoder_mu[f] = mu
            self.encoder_log_sigma[f] = ls
            register(gru.parameters() + mu.parameters() + ls.parameters())

        self.disc_init: dict[str, Linear] = {}
        self.disc_gru: dict[str, GruCell] = {}
        self.disc_out: dict[str, Linear] = {}
        if cfg.mode != "ablation_single_latent":
            for f in self.features:
                n_classes = FEATURE_CLASSES[f]
                init = Linear.create(f"discriminator.{f}.init", cfg.z_dim, cfg.hidden_dim, rng, dtype)
                gru = GruCell.create(f"discriminator.{f}.gru", n_classes, cfg.hidden_dim, rng, dtype)
                out = Linear.create(f"discriminator.{f}.out", cfg.hidden_dim, n_classes, rng, dtype)
                self.disc_init[f] = init
                self.disc_gru[f] = gru
                self.disc_out[f] = out
                register(init.parameters() + gru.parameters() + out.parameters())

        cond_dim = cfg.z_dim * len(self.features) + KEY_CLASSES
        self.decoder_init = Linear.create("decoder.init", cond_dim, cfg.hidden_dim, rng, dtype)
        self.decoder_gru = GruCell.create(
            "decoder.gru", cfg.embedding_dim + cond_dim, cfg.hidden_dim, rng, dtype
        )
        self.decoder_out = Linear.create("decoder.out", cfg.hidden_dim, cfg.vocab_size, rng, dtype)
        register(
            self.decoder_init.parameters()
            + self.decoder_gru.parameters()
            + self.decoder_out.parameters()
        )

        self.prior: GaussianMixturePrior | None = None
        if cfg.mode != "vanilla_vae":
            means = {}
            for f in self.features:
                p = Parameter(
                    f"prior.{f}.means",
                    xavier_uniform(rng, (cfg.n_clusters, cfg.z_dim), dtype),
                )
                means[f] = p
                register([p])
            self.prior = GaussianMixturePrior(means, cfg.prior_variance, cfg.n_clusters)

    @property
    def features(self) -> tuple[str, ...]:
        if self.config.mode == "ablation_single_latent":
            return ("latent",)
        return FEATURES

    @property
    def reg_dim(self) -> int:
        return self.config.reg_dim

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def parameter(self, name: str) -> Parameter:
        return self._params[name]

    def zd_range(self, feature: str) -> tuple[float, float]:
        if self.zd_ranges is None or feature not in self.zd_ranges:
            raise ValueError("model has no stored fader ranges; train it first")
        return self.zd_ranges[feature]

    # ---------------------------------------------------------------- encode

    def encode(
        self,
        token_ids: np.ndarray,
        lengths: np.ndarray,
        noise: dict[str, np.ndarray] | None = None,
    ) -> dict[str, Posterior]:
        """Per-feature posteriors for a padded id batch.

        Without noise the returned z is exactly the posterior mean.
        """
        token_ids = np.asarray(token_ids)
        if token_ids.shape[1] > self.config.max_token_len:
            raise TokenOverflow(
                f"sequence length {token_ids.shape[1]} exceeds {self.config.max_token_len}"
            )
        batch, width = token_ids.shape
        xs_flat = self.embedding(token_ids.T.reshape(-1))  # step-major [T*B, emb]
        masks = [
            (t < lengths).astype(self.dtype)[:, None] for t in range(width)
        ]
        h0 = Tensor(np.zeros((batch, self.config.hidden_dim), dtype=self.dtype))
        out: dict[str, Posterior] = {}
        for f in self.features:
            states = gru_sequence_flat(
                self.encoder_gru[f], xs_flat, batch, h0, step_masks=masks
            )
            final = states[-1]
            mu = self.encoder_mu[f](final)
            log_sigma = self.encoder_log_sigma[f](final)
            if noise is None:
                z = mu
            else:
                z = ad.gaussian_sample(mu, log_sigma, noise[f])
            z_d = ad.narrow(z, 1, self.config.reg_dim, 1)
            out[f] = Posterior(mu, log_sigma, z, z_d)
        return out

    # ----------------------------------------------------------- discriminate

    def discriminate(self, z: Tensor, feature: str, teacher: np.ndarray | None = None) -> Tensor:
        """16-step label logits decoded from one latent code.

        With teacher labels the decoder is teacher-forced (training path);
        without, it feeds back its own argmax.  Returns [B, 16, C].
        """
        if self.config.mode == "ablation_single_latent":
            raise UnsupportedInMode("ablation model has no discriminators")
        n_classes = FEATURE_CLASSES[feature]
        batch = z.data.shape[0]
        steps = self.config.label_len
        h0 = ad.tanh(self.disc_init[feature](z))
        if teacher is not None:
            eye = np.eye(n_classes, dtype=self.dtype)
            x_flat = np.zeros((steps * batch, n_classes), dtype=self.dtype)
            x_flat[batch:] = eye[teacher[:, :-1].T.reshape(-1)]  # shifted one-hots
            states = gru_sequence_flat(self.disc_gru[feature], Tensor(x_flat), batch, h0)
            flat = ad.concat(states, axis=0)  # [steps*B, H], step-major
            logits = self.disc_out[feature](flat)
            return ad.reshape(logits, (steps, batch, n_classes))
        # Free-running path is inference-only; no tape needed.
        h = h0.data
        x = np.zeros((batch, n_classes), dtype=self.dtype)
        eye = np.eye(n_classes, dtype=self.dtype)
        all_logits = np.empty((steps, batch, n_classes), dtype=self.dtype)
        for t in range(steps):
            h = gru_step_raw(self.disc_gru[feature], x, h)
            step_logits = self.disc_out[feature].raw(h)
            all_logits[t] = step_logits
            x = eye[step_logits.argmax(axis=1)]
        return Tensor(all_logits)

    # ---------------------------------------------------------------- decode

    def _condition(self, latents: dict[str, Tensor], key_onehot: np.ndarray) -> Tensor:
        parts = [latents[f] for f in self.features]
        parts.append(Tensor(np.asarray(key_onehot, dtype=self.dtype)))
        return ad.concat(parts, axis=1)

    def decode_teacher_forced(
        self, latents: dict[str, Tensor], key_onehot: np.ndarray, token_ids: np.ndarray
    ) -> Tensor:
        """Per-position logits [T*B, vocab] (step-major) under teacher forcing."""
        batch, width = token_ids.shape
        cond = self._condition(latents, key_onehot)
        h0 = ad.tanh(self.decoder_init(cond))
        inputs = np.concatenate(
            [np.full((batch, 1), START_ID, dtype=np.int64), token_ids[:, :-1]], axis=1
        )
        embedded = self.embedding(inputs.T.reshape(-1))  # step-major [T*B, emb]
        xs_flat = ad.concat([embedded, ad.tile_rows(cond, width)], axis=1)
        states = gru_sequence_flat(self.decoder_gru, xs_flat, batch, h0)
        flat = ad.concat(states, axis=0)
        return self.decoder_out(flat)

    def decode_greedy(
        self, latents: dict[str, np.ndarray], key_onehot: np.ndarray
    ) -> list[TokenSeq]:
        """Greedy argmax generation from START until 16 steps of shift or the cap."""
        cond = np.concatenate(
            [np.asarray(latents[f], dtype=self.dtype) for f in self.features]
            + [np.asarray(key_onehot, dtype=self.dtype)],
            axis=1,
        )
        n = cond.shape[0]
        h = np.tanh(self.decoder_init.raw(cond))
        emb = self.embedding.weight.data
        prev = np.full(n, START_ID, dtype=np.int64)
        out_ids: list[list[int]] = [[] for _ in range(n)]
        shifts = np.zeros(n, dtype=np.int64)
        active = np.ones(n, dtype=bool)
        for _ in range(self.config.max_token_len):
            x = np.concatenate([emb[prev], cond], axis=1)
            h = gru_step_raw(self.decoder_gru, x, h)
            nxt = self.decoder_out.raw(h).argmax(axis=1)
            for i in np.nonzero(active)[0]:
                tid = int(nxt[i])
                out_ids[i].append(tid)
                if tid >= TIME_SHIFT_BASE:
                    shifts[i] += tid - TIME_SHIFT_BASE + 1
                    if shifts[i] >= STEPS_PER_SEGMENT:
                        active[i] = False
            prev = nxt
            if not active.any():
                break
        return [TokenSeq.from_ids(ids) for ids in out_ids]

    # --------------------------------------------------------------- cluster

    def cluster_logits(self, z: Tensor, feature: str) -> Tensor:
        """Log joint log p(c_k) + log N(z; mu_k, sigma^2 I) per component, [B, K]."""
        if self.prior is None:
            raise UnsupportedInMode("cluster inference requires the mixture prior")
        cfg = self.config
        means = self.prior.means[feature]
        var = self.prior.variance
        log_norm = -0.5 * cfg.z_dim * math.log(2.0 * math.pi * var)
        log_p_c = -math.log(cfg.n_clusters)
        cols = []
        for k in range(cfg.n_clusters):
            row = ad.narrow(means, 0, k, 1)  # [1, z]
            diff = ad.sub(z, row)
            sq = ad.tsum(ad.mul(diff, diff), axis=1, keepdims=True)
            cols.append(ad.add(ad.mul(sq, -0.5 / var), log_norm + log_p_c))
        return ad.concat(cols, axis=1)

    def infer_cluster(self, z: Tensor, feature: str) -> Tensor:
        """Cluster posterior q(c|z) as a [B, K] tensor summing to one per row."""
        return ad.softmax(self.cluster_logits(z, feature), axis=1)

    def infer_cluster_raw(self, z: np.ndarray, feature: str) -> np.ndarray:
        return self.infer_cluster(Tensor(np.asarray(z, dtype=self.dtype)), feature).data

    # ---------------------------------------------------------------- losses

    def kl_term(
        self,
        posterior: Posterior,
        feature: str,
        c_label: int | np.ndarray | None = None,
    ) -> Tensor:
        """Eq.-style per-feature KL, averaged over the batch.

        gm_vae: supervised records use KL(q(z|X) || p(z|c_label)); unsupervised
        records marginalize over components weighted by q(c|z) and add the
        categorical KL against the uniform prior.  A label array may mix both
        branches record-by-record (entries of -1 mean unsupervised).
        vanilla_vae: standard-normal KL regardless of labels.
        """
        batch = posterior.mu.data.shape[0]
        if self.config.mode == "vanilla_vae":
            zeros = Tensor(np.zeros_like(posterior.mu.data))
            per_sample = ad.kl_diag_gaussians_per_sample(
                posterior.mu, posterior.log_sigma, zeros, 1.0
            )
            return ad.tmean(per_sample)
        if self.prior is None:
            raise UnsupportedInMode("kl_term requires a prior")
        sigma = self.prior.sigma
        means = self.prior.means[feature]
        k_count = self.config.n_clusters

        if c_label is None:
            labels = np.full(batch, -1, dtype=np.int64)
        elif isinstance(c_label, (int, np.integer)):
            if not 0 <= int(c_label) < k_count:
                raise IndexError(f"cluster label {c_label} out of range")
            labels = np.full(batch, int(c_label), dtype=np.int64)
        else:
            labels = np.asarray(c_label, dtype=np.int64)
            if labels.max(initial=-1) >= k_count:
                raise IndexError("cluster label out of range")

        sup_mask = (labels >= 0).astype(posterior.mu.data.dtype)[:, None]
        any_sup = bool((labels >= 0).any())
        any_unsup = bool((labels < 0).any())

        per_k = [
            ad.kl_diag_gaussians_per_sample(
                posterior.mu,
                posterior.log_sigma,
                ad.narrow(means, 0, k, 1),
                sigma,
            )
            for k in range(k_count)
        ]

        parts: list[Tensor] = []
        if any_sup:
            rows = ad.gather_rows(means, np.where(labels >= 0, labels, 0))
            sup = ad.kl_diag_gaussians_per_sample(
                posterior.mu, posterior.log_sigma, rows, sigma
            )
            parts.append(ad.mul(sup, Tensor(sup_mask)))
        if any_unsup:
            logits = self.cluster_logits(posterior.z, feature)
            log_q = ad.log_softmax(logits, axis=1)
            q = ad.exp(log_q)
            weighted = None
            for k in range(k_count):
                term = ad.mul(ad.narrow(q, 1, k, 1), per_k[k])
                weighted = term if weighted is None else ad.add(weighted, term)
            cat_kl = ad.tsum(
                ad.mul(q, ad.add(log_q, math.log(k_count))), axis=1, keepdims=True
            )
            unsup = ad.add(weighted, cat_kl)
            parts.append(ad.mul(unsup, Tensor(1.0 - sup_mask)))
        combined = parts[0] if len(parts) == 1 else ad.add(parts[0], parts[1])
        return ad.tmean(combined)

    def latent_reg_loss(self, z_d: Tensor, y: np.ndarray) -> Tensor:
        """Pairwise ordering alignment MSE(tanh(D_z), sign(D_y)) over the batch."""
        batch = z_d.data.shape[0]
        if batch < 2:
            raise BatchTooSmall("latent regularization needs a batch of at least 2")
        y = np.asarray(y, dtype=z_d.data.dtype)
        d_z = ad.sub(z_d, ad.transpose(z_d))  # [B, 1] - [1, B] -> [B, B]
        sign = np.sign(y[:, None] - y[None, :])
        diff = ad.sub(ad.tanh(d_z), Tensor(sign))
        return ad.tmean(ad.mul(diff, diff))

    def total_loss(
        self,
        batch: Batch,
        step: int,
        noise: dict[str, np.ndarray] | None = None,
    ) -> tuple[Tensor, LossBreakdown]:
        """Composite training objective; returns the scalar and its parts."""
        cfg = self.config
        posteriors = self.encode(batch.token_ids, batch.lengths, noise=noise)
        beta = cfg.beta(step)

        latents = {f: posteriors[f].z for f in self.features}
        flat_logits = self.decode_teacher_forced(latents, batch.key_onehot, batch.token_ids)
        width = batch.token_ids.shape[1]
        targets = batch.token_ids.T.reshape(-1)
        mask = (np.arange(width)[:, None] < batch.lengths[None, :]).astype(self.dtype)
        weights = mask.reshape(-1)
        token_ce = ad.softmax_cross_entropy(flat_logits, targets, weights=weights)
        # Mean per-sample sum of token NLLs, to keep the paper's additive scales.
        reconstruction = ad.mul(token_ce, float(weights.sum()) / batch.size)

        total = reconstruction
        kl_values: dict[str, Tensor] = {}
        for f in self.features:
            labels = batch.cluster_labels if cfg.mode != "vanilla_vae" else None
            kl = self.kl_term(posteriors[f], f, labels)
            kl_values[f] = kl
            if beta != 0.0:
                total = ad.add(total, ad.mul(kl, beta))

        reg_values: dict[str, Tensor | None] = {f: None for f in FEATURES}
        disc_values: dict[str, Tensor | None] = {f: None for f in FEATURES}
        if cfg.mode != "ablation_single_latent":
            for f in self.features:
                if cfg.reg_weight != 0.0:
                    reg = ad.mul(
                        self.latent_reg_loss(posteriors[f].z_d, batch.density(f)),
                        cfg.reg_weight,
                    )
                    reg_values[f] = reg
                    total = ad.add(total, reg)
                steps = cfg.label_len
                teacher = batch.label_steps(f)
                logits = self.discriminate(posteriors[f].z, f, teacher=teacher)
                flat = ad.reshape(logits, (steps * batch.size, FEATURE_CLASSES[f]))
                disc_ce = ad.softmax_cross_entropy(flat, teacher.T.reshape(-1))
                disc = ad.mul(disc_ce, float(steps))  # per-sample sum over 16 steps
                disc_values[f] = disc
                total = ad.add(total, disc)

        def value(t: Tensor | None) -> float:
            return 0.0 if t is None else t.item()

        if cfg.mode == "ablation_single_latent":
            kl_rhythm, kl_note = kl_values["latent"].item(), 0.0
        else:
            kl_rhythm, kl_note = kl_values["rhythm"].item(), kl_values["note"].item()
        breakdown = LossBreakdown(
            reconstruction=reconstruction.item(),
            kl_rhythm=kl_rhythm,
            kl_note=kl_note,
            reg_rhythm=value(reg_values["rhythm"]),
            reg_note=value(reg_values["note"]),
            disc_rhythm=value(disc_values["rhythm"]),
            disc_note=value(disc_values["note"]),
            beta=beta,
            total=total.item(),
        )
        return total, breakdown

    # ------------------------------------------------------- batch inference

    def encode_records(self, records: Sequence, batch_size: int = 256) -> dict[str, np.ndarray]:
        """Posterior means for many records, batched; {feature: [N, z_dim]}."""
        if not records:
            raise EmptyCorpus("no records to encode")
        outputs = {f: [] for f in self.features}
        for start in range(0, len(records), batch_size):
            chunk = make_batch(records[start : start + batch_size], dtype=self.dtype)
            posteriors = self.encode(chunk.token_ids, chunk.lengths)
            for f in self.features:
                outputs[f].append(posteriors[f].mu.data)
        return {f: np.concatenate(chunks, axis=0) for f, chunks in outputs.items()}

    def cluster_posteriors(self, records: Sequence) -> dict[str, np.ndarray]:
        """q(c|z) per feature from posterior means; {feature: [N, K]}."""
        encoded = self.encode_records(records)
        return {f: self.infer_cluster_raw(encoded[f], f) for f in self.features}

    def classify_records(self, records: Sequence) -> np.ndarray:
        """Arousal class by the normalized product of per-feature posteriors."""
        per_feature = self.cluster_posteriors(records)
        product = np.ones_like(next(iter(per_feature.values())))
        for q in per_feature.values():
            product = product * q
        product /= product.sum(axis=1, keepdims=True)
        return product.argmax(axis=1)

    # ------------------------------------------------- evaluation protocol

    def encode_latents_batch(self, records: Sequence) -> dict[str, np.ndarray]:
        return self.encode_records(records)

    def decode_segments(
        self, latents: dict[str, np.ndarray], key_onehot: np.ndarray
    ) -> list:
        from .tokens import decode_tokens

        return [decode_tokens(seq) for seq in self.decode_greedy(latents, key_onehot)]
