"""HTTP client for a remote denoiser service.

The wire protocol is JSON with float payloads as base64-encoded little-endian
32-bit arrays:

    GET  /v1/info     -> {latent_shape, alpha_range, model, parameterization}
    POST /v1/denoise  -> {"items": [{latent, shape, alpha, prompt}]} per item;
                         the response mirrors shapes and returns eps-form
                         predictions regardless of the server's native
                         parameterization
    POST /v1/logprob  -> {"template": ..., "targets": [...]} with one target
                         per mask slot; response carries per-token log-probs
                         and their sum

Transport failures, protocol violations, unsupported conditions and shape
mismatches surface as distinct error classes so callers can tell an outage
from a bad request.
"""

from __future__ import annotations

import base64

import httpx
import numpy as np

from ..conditions import DenoiserCondition, COMPONENT_SUBSET, PHRASE_SET, PROMPT
from ..diffusion import LogSnrPoint
from ..errors import (
    BridgeProtocolError,
    BridgeTransportError,
    ShapeMismatchError,
    UnsupportedConditionError,
)


def encode_floats(values: np.ndarray) -> str:
    """Base64 of the array as little-endian float32, C order."""
    return base64.b64encode(np.ascontiguousarray(values, dtype="<f4").tobytes()).decode("ascii")


def decode_floats(payload: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(payload.encode("ascii"))
    arr = np.frombuffer(raw, dtype="<f4")
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise BridgeProtocolError(f"payload holds {arr.size} floats, shape {shape} needs {expected}")
    return arr.reshape(shape).astype(np.float64)


class BridgeClient:
    """Typed access to the three bridge endpoints."""

    def __init__(self, base_url: str, transport: httpx.BaseTransport | None = None, timeout: float = 60.0):
        self._client = httpx.Client(base_url=base_url, transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "BridgeClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str, **kwargs) -> dict:
        try:
            response = self._client.request(method, path, **kwargs)
        except httpx.TransportError as exc:
            raise BridgeTransportError(f"{method} {path}: {exc}") from exc
        if response.status_code == 422:
            detail = _detail(response)
            raise UnsupportedConditionError(f"{method} {path}: {detail}")
        if response.status_code >= 400:
            raise BridgeProtocolError(f"{method} {path}: HTTP {response.status_code} {_detail(response)}")
        try:
            return response.json()
        except ValueError as exc:
            raise BridgeProtocolError(f"{method} {path}: non-JSON response") from exc

    def info(self) -> dict:
        return self._request("GET", "/v1/info")

    def denoise(self, items: list[dict]) -> list[dict]:
        body = self._request("POST", "/v1/denoise", json={"items": items})
        out = body.get("items")
        if not isinstance(out, list) or len(out) != len(items):
            raise BridgeProtocolError("denoise response item count does not match request")
        return out

    def logprob(self, template: str, targets: list[str]) -> dict:
        return self._request("POST", "/v1/logprob", json={"template": template, "targets": list(targets)})


def _detail(response: httpx.Response) -> str:
    try:
        return str(response.json().get("detail", response.text[:200]))
    except ValueError:
        return response.text[:200]


class BridgedDenoiser:
    """Denoiser backed by a bridge server; text conditions only."""

    def __init__(self, client: BridgeClient):
        self._client = client
        self._latent_shape: tuple[int, int, int] | None = None

    def latent_shape(self) -> tuple[int, int, int]:
        if self._latent_shape is None:
            info = self._client.info()
            self._latent_shape = tuple(int(v) for v in info["latent_shape"])
        return self._latent_shape

    def _prompt_for(self, condition: DenoiserCondition) -> str | None:
        if condition.is_unconditional:
            return None
        if condition.kind == PROMPT:
            return condition.text
        if condition.kind == PHRASE_SET:
            return condition.phrase_text()
        if condition.kind == COMPONENT_SUBSET:
            raise UnsupportedConditionError("bridge denoisers take text conditions, not component subsets")
        raise UnsupportedConditionError(condition.kind)

    def predict_eps(
        self, x_alpha: np.ndarray, point: LogSnrPoint, condition: DenoiserCondition
    ) -> np.ndarray:
        arr = np.asarray(x_alpha, dtype=np.float64)
        shape = self.latent_shape()
        if arr.shape[-3:] != shape:
            raise ShapeMismatchError("x_alpha", shape, arr.shape[-3:])
        batch_shape = arr.shape[:-3]
        flat = arr.reshape(-1, *shape)
        prompt_text = self._prompt_for(condition)
        items = [
            {
                "latent": encode_floats(item),
                "shape": list(shape),
                "alpha": float(point.alpha),
                "prompt": prompt_text,
            }
            for item in flat
        ]
        responses = self._client.denoise(items)
        outs = []
        for resp in responses:
            got_shape = tuple(int(v) for v in resp["shape"])
            if got_shape != shape:
                raise ShapeMismatchError("bridge response", shape, got_shape)
            outs.append(decode_floats(resp["eps"], got_shape))
        return np.stack(outs).reshape(*batch_shape, *shape)
