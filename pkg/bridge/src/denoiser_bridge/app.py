"""The HTTP app: three endpoints over one served model.

    GET  /v1/info      latent geometry, served log-SNR range, identifiers
    POST /v1/denoise   batched noise prediction, always returned in eps form
    POST /v1/logprob   masked-token log-probabilities and their sum

Continuous request log-SNRs snap to the nearest served level; the response
reports both the requested and served values plus the discrete timestep
used. Error mapping: 400 malformed encodings/templates/shapes, 422 values
the model cannot serve (log-SNR outside range, unknown tokens/conditions),
503 when no model is loaded. An optional cassette records or replays POST
responses byte-for-byte.
"""

from __future__ import annotations

import json

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .cassette import Cassette, CassetteMiss
from .codec import CodecError, decode_floats, encode_floats
from .models import DenoisePrediction, ServedModel, TemplateError, UnknownTokenError, convert_to_eps


class DenoiseItem(BaseModel):
    latent: str
    shape: list[int]
    alpha: float
    prompt: str | None = None


class DenoiseRequest(BaseModel):
    items: list[DenoiseItem]


class LogProbRequest(BaseModel):
    template: str
    targets: list[str]


def _json_response(payload: dict) -> Response:
    # explicit serialization keeps responses byte-identical across calls
    return Response(content=json.dumps(payload), media_type="application/json")


def create_app(
    model: ServedModel | None,
    cassette: Cassette | None = None,
    echo_payloads: bool = False,
) -> FastAPI:
    app = FastAPI(title="denoiser-bridge")
    state = {"model": model, "cassette": cassette, "echo": echo_payloads}

    def served() -> ServedModel:
        if state["model"] is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return state["model"]

    def with_cassette(endpoint: str, body: dict, compute) -> Response:
        cas: Cassette | None = state["cassette"]
        if cas is not None and cas.mode == "replay":
            try:
                return Response(content=cas.replay(endpoint, body), media_type="application/json")
            except CassetteMiss as exc:
                raise HTTPException(status_code=503, detail=str(exc))
        payload = compute()
        text = json.dumps(payload)
        if cas is not None:
            cas.store(endpoint, body, text)
        return Response(content=text, media_type="application/json")

    @app.get("/v1/info")
    def info():
        m = served()
        grid = m.log_snr_grid()
        return _json_response(
            {
                "latent_shape": list(m.latent_shape),
                "alpha_range": [float(grid.min()), float(grid.max())],
                "levels": int(grid.size),
                "model": m.name,
                "parameterization": "eps",
            }
        )

    @app.post("/v1/denoise")
    def denoise(request: DenoiseRequest):
        def compute():
            m = served()
            grid = m.log_snr_grid()
            out = []
            for item in request.items:
                if tuple(item.shape) != m.latent_shape:
                    raise HTTPException(
                        status_code=400,
                        detail=f"latent shape {item.shape} does not match served {list(m.latent_shape)}",
                    )
                try:
                    latent = decode_floats(item.latent, tuple(item.shape)).astype(np.float64)
                except CodecError as exc:
                    raise HTTPException(status_code=400, detail=str(exc))
                if not (grid.min() <= item.alpha <= grid.max()):
                    raise HTTPException(
                        status_code=422,
                        detail=f"alpha {item.alpha} outside served range [{grid.min()}, {grid.max()}]",
                    )
                idx = int(np.argmin(np.abs(grid - item.alpha)))
                alpha_served = float(grid[idx])
                try:
                    pred: DenoisePrediction = m.denoise(latent, alpha_served, idx, item.prompt)
                except UnknownTokenError as exc:
                    raise HTTPException(status_code=422, detail=f"unsupported condition: {exc}")
                except TemplateError as exc:
                    raise HTTPException(status_code=422, detail=str(exc))
                eps = convert_to_eps(pred, latent, alpha_served)
                entry = {
                    "eps": encode_floats(eps),
                    "shape": list(m.latent_shape),
                    "alpha_requested": float(item.alpha),
                    "alpha_served": alpha_served,
                    "timestep": idx,
                    "parameterization": "eps",
                    "native_parameterization": pred.parameterization,
                }
                if state["echo"]:
                    entry["echo"] = item.latent
                out.append(entry)
            return {"items": out}

        return with_cassette("/v1/denoise", request.model_dump(), compute)

    @app.post("/v1/logprob")
    def logprob(request: LogProbRequest):
        def compute():
            m = served()
            try:
                per_token = [float(v) for v in m.token_log_probs(request.template, request.targets)]
            except TemplateError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            except UnknownTokenError as exc:
                raise HTTPException(status_code=422, detail=f"unknown token: {exc}")
            bad = [v for v in per_token if not (np.isfinite(v) and v <= 0.0)]
            if bad:
                raise HTTPException(status_code=500, detail=f"model produced invalid log-probs {bad}")
            return {"token_logprobs": per_token, "total": float(sum(per_token))}

        return with_cassette("/v1/logprob", request.model_dump(), compute)

    return app
