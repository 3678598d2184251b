"""HTTP/JSON service consumed by the fader-console UI.

One checkpoint per process; every handler is read-only against it.
Malformed bodies get 400, domain errors 422, missing checkpoint 409.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .corpus import record_from_segment
from .errors import FadersError
from .labels import KeyVector, note_density, note_label, rhythm_density, rhythm_label
from .model import FaderNetModel
from .tokens import NoteEvent, Segment, TokenSeq, decode_tokens
from .transfer import transfer


class FaderRequest(BaseModel):
    notes: list[tuple[int, int, int]] | None = None
    tokens: list[int] | None = None
    rhythm_fader: float | None = Field(default=None, ge=0.0, le=1.0)
    note_fader: float | None = Field(default=None, ge=0.0, le=1.0)
    key_index: int | None = Field(default=None, ge=0, le=23)


class TransferRequest(BaseModel):
    notes: list[tuple[int, int, int]] | None = None
    tokens: list[int] | None = None
    key_index: int | None = Field(default=None, ge=0, le=23)
    target_class: int = Field(ge=0)
    alpha: float = Field(default=1.0, ge=0.0, le=1.5)


def _segment_from_request(req: FaderRequest | TransferRequest) -> Segment:
    if req.notes is not None:
        return Segment.from_notes(
            NoteEvent(int(p), int(o), int(d)) for p, o, d in req.notes
        )
    if req.tokens is not None:
        return decode_tokens(TokenSeq.from_ids(int(i) for i in req.tokens))
    raise FadersError("request needs either notes or tokens")


def _key_for(req, segment: Segment) -> KeyVector:
    if req.key_index is not None:
        return KeyVector(req.key_index)
    if segment.notes:
        from .labels import estimate_key

        return estimate_key(segment)
    return KeyVector(0)


def _fader_to_zd(model: FaderNetModel, feature: str, fader: float) -> float:
    lo, hi = model.zd_range(feature)
    return lo + fader * (hi - lo)


def _zd_to_fader(model: FaderNetModel, feature: str, zd: float) -> float:
    lo, hi = model.zd_range(feature)
    if hi - lo < 1e-12:
        return 0.0
    return float(np.clip((zd - lo) / (hi - lo), 0.0, 1.0))


def _decoded_payload(model: FaderNetModel, latents, key: KeyVector) -> dict:
    tokens = model.decode_greedy(latents, key.one_hot()[None, :])[0]
    segment = decode_tokens(tokens)
    return {
        "tokens": tokens.to_ids(),
        "notes": [[n.pitch, n.onset_step, n.duration_steps] for n in segment.notes],
        "densities": {
            "rhythm": rhythm_density(rhythm_label(segment)),
            "note": note_density(note_label(segment)),
        },
        "key_index": key.index,
    }


def create_app(
    model: FaderNetModel | None,
    checkpoint_id: str | None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    if model is not None and model.config.mode == "ablation_single_latent":
        raise ValueError(
            "the fader console needs rhythm/note latents; "
            "single-latent ablation checkpoints cannot be served"
        )

    app = FastAPI(title="fader console service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content={"error": "bad_request", "detail": str(exc.errors())}
        )

    @app.exception_handler(FadersError)
    async def on_domain_error(request: Request, exc: FadersError):
        return JSONResponse(
            status_code=422, content={"error": type(exc).__name__, "detail": str(exc)}
        )

    @app.exception_handler(ValueError)
    async def on_value_error(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=422, content={"error": "ValueError", "detail": str(exc)}
        )

    def require_model() -> FaderNetModel:
        if model is None:
            raise _NoCheckpoint()
        return model

    class _NoCheckpoint(Exception):
        pass

    @app.exception_handler(_NoCheckpoint)
    async def on_no_checkpoint(request: Request, exc: _NoCheckpoint):
        return JSONResponse(
            status_code=409,
            content={"error": "no_checkpoint", "detail": "no checkpoint loaded"},
        )

    @app.get("/model/info")
    def model_info():
        m = require_model()
        prior_summary = None
        if m.prior is not None:
            d = m.config.reg_dim
            prior_summary = {
                f: [
                    {
                        "component": k,
                        "zd": float(means.data[k, d]),
                        "norm": float(np.linalg.norm(means.data[k])),
                    }
                    for k in range(m.config.n_clusters)
                ]
                for f, means in m.prior.means.items()
            }
        return {
            "checkpoint_id": checkpoint_id,
            "mode": m.config.mode,
            "dims": {
                "z_dim": m.config.z_dim,
                "hidden_dim": m.config.hidden_dim,
                "embedding_dim": m.config.embedding_dim,
                "vocab_size": m.config.vocab_size,
                "max_token_len": m.config.max_token_len,
            },
            "n_clusters": m.config.n_clusters,
            "reg_dim": m.config.reg_dim,
            "zd_ranges": m.zd_ranges,
            "prior_means_summary": prior_summary,
            "features": list(m.features),
        }

    def _encode_record(m: FaderNetModel, req) -> tuple[dict, KeyVector]:
        segment = _segment_from_request(req)
        record = record_from_segment(segment)
        key = _key_for(req, segment)
        latents = m.encode_latents_batch([record])
        return latents, key

    @app.post("/encode")
    def encode(req: FaderRequest):
        m = require_model()
        latents, key = _encode_record(m, req)
        d = m.config.reg_dim
        features = {}
        for f in m.features:
            zd = float(latents[f][0, d])
            entry = {
                "mu": latents[f][0].tolist(),
                "z_d": zd,
                "fader": _zd_to_fader(m, f, zd),
            }
            if m.prior is not None:
                entry["cluster_posterior"] = m.infer_cluster_raw(latents[f], f)[0].tolist()
            features[f] = entry
        return {
            "checkpoint_id": checkpoint_id,
            "features": features,
            "key_index": key.index,
        }

    @app.post("/decode")
    def decode(req: FaderRequest):
        m = require_model()
        latents, key = _encode_record(m, req)
        return {"checkpoint_id": checkpoint_id, **_decoded_payload(m, latents, key)}

    @app.post("/fade")
    def fade(req: FaderRequest):
        m = require_model()
        latents, key = _encode_record(m, req)
        d = m.config.reg_dim
        faders = {"rhythm": req.rhythm_fader, "note": req.note_fader}
        applied = {}
        for f in m.features:
            value = faders.get(f)
            if value is not None:
                latents[f][0, d] = _fader_to_zd(m, f, value)
                applied[f] = value
        return {
            "checkpoint_id": checkpoint_id,
            "faders": applied,
            **_decoded_payload(m, latents, key),
        }

    @app.post("/transfer")
    def do_transfer(req: TransferRequest):
        m = require_model()
        if m.prior is None:
            raise FadersError("transfer requires a mixture-prior checkpoint")
        if not 0 <= req.target_class < m.config.n_clusters:
            raise FadersError(f"target class {req.target_class} out of range")
        segment = _segment_from_request(req)
        result = transfer(m, segment, req.target_class, alpha=req.alpha)
        return {"checkpoint_id": checkpoint_id, **result.to_dict()}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
