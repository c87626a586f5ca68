"""Served model implementations.

A served model exposes a fixed latent geometry, a finite band of log-SNR
values realized as discrete noise levels, a denoise call returning the
prediction in its *native* parameterization, and a masked-token log-prob
call. The app layer snaps the request's continuous log-SNR to the nearest
served level and converts whatever the model natively predicts into
noise-prediction form, so clients only ever see eps-form outputs:

    x0-form:  eps = (x_t - a * x0_hat) / b
    v-form:   eps = a * v_hat + b * x_t

with a = sqrt(sigmoid(alpha)), b = sqrt(sigmoid(-alpha)).

Three implementations ship: a zero-prediction echo fixture for protocol
tests, a small Gaussian-mixture toy (natively x0-parameterized, so the
conversion path is exercised for real), and lazy adapters for pretrained
pipelines that only import their heavyweight dependencies when constructed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np


class UnknownTokenError(KeyError):
    pass


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class DenoisePrediction:
    values: np.ndarray  # native-parameterization prediction, latent-shaped
    parameterization: str  # "eps" | "x0" | "v"


class ServedModel(Protocol):
    name: str
    latent_shape: tuple[int, int, int]

    def log_snr_grid(self) -> np.ndarray:
        """Discrete, increasing log-SNR levels the model can serve."""
        ...

    def denoise(self, latent: np.ndarray, alpha: float, timestep: int, prompt: str | None) -> DenoisePrediction:
        ...

    def token_log_probs(self, template: str, targets: list[str]) -> list[float]:
        ...


MASK = "[MASK]"


def mask_positions(template: str) -> list[int]:
    return [i for i, tok in enumerate(template.split()) if tok == MASK]


class EchoModel:
    """Protocol fixture: predicts zero noise, serves a uniform vocabulary."""

    name = "echo-fixture"

    def __init__(self, latent_shape=(4, 8, 8), vocab_size: int = 1000):
        self.latent_shape = tuple(latent_shape)
        self.vocab_size = vocab_size
        self._grid = np.linspace(-12.0, 12.0, 49)

    def log_snr_grid(self) -> np.ndarray:
        return self._grid

    def denoise(self, latent, alpha, timestep, prompt):
        return DenoisePrediction(np.zeros(self.latent_shape, dtype=np.float64), "eps")

    def token_log_probs(self, template, targets):
        return [-math.log(self.vocab_size)] * len(targets)


class GmmToyModel:
    """Exact posterior-mean denoiser for a Gaussian mixture, served natively
    in x0 form over a discrete log-SNR grid; priors come from a phrase table.

    Reads the mixture JSON schema of the analysis engine (shape, weights,
    means, variances, subsets) but conditions on *prompt text*: each prompt
    token must name a component subset and the selected subsets intersect.
    """

    def __init__(self, model_file: str | Path, prior_file: str | Path | None = None, grid_points: int = 201):
        raw = json.loads(Path(model_file).read_text())
        self.name = f"gmm-toy:{Path(model_file).name}"
        self.latent_shape = tuple(int(v) for v in raw["shape"])
        self.weights = np.asarray(raw["weights"], dtype=np.float64)
        self.means = np.asarray(raw["means"], dtype=np.float64).reshape(self.weights.size, -1)
        variances = np.asarray(raw["variances"], dtype=np.float64)
        self.variances = variances[:, None] if variances.ndim == 1 else variances
        self.subsets = {k: tuple(v) for k, v in raw.get("subsets", {}).items()}
        self._grid = np.linspace(-12.0, 12.0, grid_points)
        self._priors: dict[str, float] = {}
        if prior_file is not None:
            table = json.loads(Path(prior_file).read_text())
            for entry in table["entries"]:
                if entry.get("context") is None:
                    self._priors[entry["phrase"]] = float(entry["probability"])

    def log_snr_grid(self) -> np.ndarray:
        return self._grid

    def _component_mask(self, prompt: str | None) -> np.ndarray:
        if prompt is None or not prompt.strip():
            return np.ones(self.weights.size, dtype=bool)
        mask = np.ones(self.weights.size, dtype=bool)
        for token in prompt.split():
            if token not in self.subsets:
                raise UnknownTokenError(token)
            sel = np.zeros(self.weights.size, dtype=bool)
            sel[list(self.subsets[token])] = True
            mask &= sel
        if not mask.any():
            raise TemplateError(f"prompt {prompt!r} selects no component")
        return mask

    def denoise(self, latent, alpha, timestep, prompt):
        a = math.sqrt(1.0 / (1.0 + math.exp(-alpha)))
        b = math.sqrt(1.0 / (1.0 + math.exp(alpha)))
        mask = self._component_mask(prompt)
        w = np.where(mask, self.weights, 0.0)
        w = w / w.sum()
        xf = np.asarray(latent, dtype=np.float64).reshape(-1)

        post_var = a * a * self.variances + b * b  # (K, 1|D)
        diff = xf[None, :] - a * self.means  # (K, D)
        if self.variances.shape[1] == 1:
            quad = (diff * diff).sum(axis=1) / post_var[:, 0]
            logdet = xf.size * np.log(post_var[:, 0])
        else:
            quad = (diff * diff / post_var).sum(axis=1)
            logdet = np.log(post_var).sum(axis=1)
        with np.errstate(divide="ignore"):
            log_resp = np.log(w) - 0.5 * (quad + logdet)
        log_resp -= log_resp.max()
        resp = np.exp(log_resp)
        resp /= resp.sum()
        gain = a * self.variances / post_var
        post_mean = self.means + gain * diff
        x0_hat = resp @ post_mean
        return DenoisePrediction(x0_hat.reshape(self.latent_shape), "x0")

    def token_log_probs(self, template, targets):
        positions = mask_positions(template)
        if len(positions) != len(targets):
            raise TemplateError(
                f"template has {len(positions)} mask slots but {len(targets)} targets were given"
            )
        out = []
        for token in targets:
            if token in self._priors:
                out.append(math.log(self._priors[token]))
            elif token in self.subsets:
                prob = float(self.weights[list(self.subsets[token])].sum())
                out.append(math.log(prob))
            else:
                raise UnknownTokenError(token)
        return out


class PretrainedDiffusionModel:
    """Adapter for a pretrained latent text-to-image denoiser.

    Construction imports torch/diffusers and loads the pipeline, so this
    class is only touched when a real model is requested. The scheduler's
    cumulative signal fractions define the served log-SNR grid
    (log(acum / (1 - acum))), and native eps- or v-predictions are returned
    as-is for the app layer to convert.
    """

    def __init__(self, model_id: str, mlm_id: str = "bert-base-uncased", device: str = "cpu"):
        import torch  # deferred heavyweight imports
        from diffusers import StableDiffusionPipeline
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        self._torch = torch
        self.pipe = StableDiffusionPipeline.from_pretrained(model_id).to(device)
        self.device = device
        self.name = model_id
        unet = self.pipe.unet
        ch = unet.config.in_channels
        size = unet.config.sample_size
        self.latent_shape = (ch, size, size)
        acum = self.pipe.scheduler.alphas_cumprod.cpu().numpy().astype(np.float64)
        self._log_snr = np.log(acum / (1.0 - acum))  # decreasing in t
        order = np.argsort(self._log_snr)
        self._sorted_log_snr = self._log_snr[order]
        self._sorted_t = np.arange(self._log_snr.size)[order]
        self.prediction_type = str(self.pipe.scheduler.config.prediction_type)
        self.tokenizer = AutoTokenizer.from_pretrained(mlm_id)
        self.mlm = AutoModelForMaskedLM.from_pretrained(mlm_id).to(device)

    def log_snr_grid(self) -> np.ndarray:
        return self._sorted_log_snr

    def _embed(self, prompt: str | None):
        torch = self._torch
        text = prompt if prompt is not None else ""
        tokens = self.pipe.tokenizer(
            [text], padding="max_length", max_length=self.pipe.tokenizer.model_max_length,
            truncation=True, return_tensors="pt",
        )
        with torch.no_grad():
            return self.pipe.text_encoder(tokens.input_ids.to(self.device))[0]

    def denoise(self, latent, alpha, timestep, prompt):
        torch = self._torch
        t = int(self._sorted_t[int(np.argmin(np.abs(self._sorted_log_snr - alpha)))])
        x = torch.tensor(np.asarray(latent, dtype=np.float32)[None], device=self.device)
        with torch.no_grad():
            out = self.pipe.unet(x, t, encoder_hidden_states=self._embed(prompt)).sample
        values = out[0].cpu().numpy().astype(np.float64)
        kind = "v" if self.prediction_type == "v_prediction" else "eps"
        return DenoisePrediction(values, kind)

    def token_log_probs(self, template, targets):
        torch = self._torch
        words = template.split()
        positions = [i for i, w in enumerate(words) if w == MASK]
        if len(positions) != len(targets):
            raise TemplateError("mask/target count mismatch")
        enc = self.tokenizer(" ".join(words), return_tensors="pt").to(self.device)
        mask_token_id = self.tokenizer.mask_token_id
        mask_idx = (enc.input_ids[0] == mask_token_id).nonzero().flatten().tolist()
        if len(mask_idx) != len(targets):
            raise TemplateError("template masks do not survive tokenization one-to-one")
        with torch.no_grad():
            logits = self.mlm(**enc).logits[0]
        log_probs = torch.log_softmax(logits, dim=-1)
        out = []
        for pos, token in zip(mask_idx, targets):
            ids = self.tokenizer(token, add_special_tokens=False).input_ids
            if len(ids) != 1:
                raise UnknownTokenError(f"{token!r} is not a single vocabulary token")
            out.append(float(log_probs[pos, ids[0]]))
        return out


def convert_to_eps(pred: DenoisePrediction, latent: np.ndarray, alpha: float) -> np.ndarray:
    """Convert a native prediction to noise form at the served log-SNR."""
    a = math.sqrt(1.0 / (1.0 + math.exp(-alpha)))
    b = math.sqrt(1.0 / (1.0 + math.exp(alpha)))
    if pred.parameterization == "eps":
        return pred.values
    if pred.parameterization == "x0":
        return (np.asarray(latent, dtype=np.float64) - a * pred.values) / b
    if pred.parameterization == "v":
        return a * pred.values + b * np.asarray(latent, dtype=np.float64)
    raise ValueError(f"unknown parameterization {pred.parameterization!r}")
