"""Small trainable denoiser for toy data.

A fully-connected net maps [flattened x_alpha, signal scale a, noise scale b,
one-hot condition] to a noise prediction and is trained to minimize
E||eps - eps_hat(x_alpha)||^2 with alpha and eps resampled every step. The
log-SNR enters through the bounded pair (a, b) rather than raw alpha.
Training uses adaptive-moment gradient descent implemented in-module so runs
are exactly reproducible from (dataset, config, seed). A fraction of each
batch is trained with the condition masked to zeros, which is what realizes
the unconditional prediction at inference time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ..conditions import COMPONENT_SUBSET, PHRASE_SET, PROMPT, DenoiserCondition
from ..diffusion import LogSnrSampler, LogSnrPoint
from ..errors import DomainError, ShapeMismatchError, TrainingDivergedError, UnsupportedConditionError
from ..rng import INIT_STREAM, STEP_STREAM, substream


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (64, 64)
    steps: int = 5000
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    uncond_fraction: float = 0.3
    sampler: LogSnrSampler = field(default_factory=LogSnrSampler)
    seed: int = 0


class MlpDenoiser:
    """Feed-forward noise predictor; tanh hidden layers, linear output."""

    def __init__(
        self,
        shape: tuple[int, int, int],
        condition_names: tuple[str, ...],
        weights: list[np.ndarray],
        biases: list[np.ndarray],
        config: TrainConfig,
        loss_trace: list[float] | None = None,
    ):
        self.shape = tuple(int(s) for s in shape)
        self.dim = self.shape[0] * self.shape[1] * self.shape[2]
        self.condition_names = tuple(condition_names)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.config = config
        self.loss_trace = list(loss_trace or [])
        in_dim = self.dim + 2 + len(self.condition_names)
        sizes = [in_dim, *config.hidden, self.dim]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise DomainError(f"layer {i} parameter shapes inconsistent with config")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DomainError(f"layer {i} has non-finite parameters")

    # ------------------------------------------------------------- inference

    def _condition_onehot(self, condition: DenoiserCondition) -> np.ndarray:
        onehot = np.zeros(len(self.condition_names))
        if condition.is_unconditional:
            return onehot
        if condition.kind == COMPONENT_SUBSET and len(condition.components) == 1:
            idx = condition.components[0]
            if idx >= len(self.condition_names):
                raise UnsupportedConditionError(f"condition id {idx} not trained")
        elif condition.kind in (PROMPT, PHRASE_SET):
            name = condition.text if condition.kind == PROMPT else condition.phrase_text()
            if name not in self.condition_names:
                raise UnsupportedConditionError(f"condition {name!r} not trained")
            idx = self.condition_names.index(name)
        else:
            raise UnsupportedConditionError(
                f"toy denoiser supports single trained labels, got {condition.describe()}"
            )
        onehot[idx] = 1.0
        return onehot

    def _forward(self, features: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        h = features
        hiddens = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.tanh(z)
            hiddens.append(h)
        return h, hiddens

    def _features(
        self, x_flat: np.ndarray, a: np.ndarray, b: np.ndarray, onehot: np.ndarray
    ) -> np.ndarray:
        n = x_flat.shape[0]
        cols = [x_flat, np.broadcast_to(a, (n,))[:, None], np.broadcast_to(b, (n,))[:, None]]
        cols.append(np.broadcast_to(onehot, (n, onehot.shape[-1])))
        return np.concatenate(cols, axis=1)

    def predict_eps(
        self, x_alpha: np.ndarray, point: LogSnrPoint, condition: DenoiserCondition
    ) -> np.ndarray:
        arr = np.asarray(x_alpha, dtype=np.float64)
        if arr.shape[-3:] != self.shape:
            raise ShapeMismatchError("x_alpha", self.shape, arr.shape[-3:])
        batch_shape = arr.shape[:-3]
        xf = arr.reshape(-1, self.dim)
        onehot = self._condition_onehot(condition)
        feats = self._features(xf, point.signal_scale, point.noise_scale, onehot)
        out, _ = self._forward(feats)
        return out.reshape(*batch_shape, *self.shape)

    # ----------------------------------------------------------- persistence

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg["sampler"] = asdict(self.config.sampler)
        cfg["hidden"] = list(self.config.hidden)
        return json.dumps(
            {
                "shape": list(self.shape),
                "condition_names": list(self.condition_names),
                "layers": [
                    {"weight": w.tolist(), "bias": b.tolist()}
                    for w, b in zip(self.weights, self.biases)
                ],
                "config": cfg,
                "loss_trace": self.loss_trace,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MlpDenoiser":
        raw = json.loads(text)
        cfg = dict(raw["config"])
        cfg["sampler"] = LogSnrSampler(**cfg["sampler"])
        cfg["hidden"] = tuple(cfg["hidden"])
        return cls(
            shape=tuple(raw["shape"]),
            condition_names=tuple(raw["condition_names"]),
            weights=[np.asarray(l["weight"]) for l in raw["layers"]],
            biases=[np.asarray(l["bias"]) for l in raw["layers"]],
            config=TrainConfig(**cfg),
            loss_trace=raw.get("loss_trace", []),
        )

    @classmethod
    def load(cls, path: str | Path) -> "MlpDenoiser":
        return cls.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def _init_params(
    shape: tuple[int, int, int], n_conditions: int, config: TrainConfig
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    dim = shape[0] * shape[1] * shape[2]
    sizes = [dim + 2 + n_conditions, *config.hidden, dim]
    rng = substream(config.seed, INIT_STREAM)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
        biases.append(np.zeros(fan_out))
    return weights, biases


def loss_and_grads(
    model: MlpDenoiser,
    x_flat: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    onehots: np.ndarray,
    eps: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Denoising MSE on one batch and its analytic parameter gradients."""
    n = x_flat.shape[0]
    feats = np.concatenate([x_flat, a[:, None], b[:, None], onehots], axis=1)
    out, hiddens = model._forward(feats)
    resid = out - eps
    loss = float(np.mean(resid**2))

    grad_ws = [np.zeros_like(w) for w in model.weights]
    grad_bs = [np.zeros_like(bb) for bb in model.biases]
    delta = 2.0 * resid / resid.size
    for i in range(len(model.weights) - 1, -1, -1):
        h_prev = hiddens[i]
        grad_ws[i] = h_prev.T @ delta
        grad_bs[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - hiddens[i] ** 2)
    return loss, grad_ws, grad_bs


def train_toy_denoiser(
    fields: np.ndarray,
    condition_ids: np.ndarray,
    condition_names: tuple[str, ...],
    config: TrainConfig,
) -> MlpDenoiser:
    """Fit the toy denoiser on (field, condition id) pairs.

    Every step draws a batch, fresh alphas from the configured proposal and
    fresh noise, then takes one adaptive-moment update. Returns the trained
    model with its loss trace attached; a non-finite loss aborts immediately.
    """
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim != 4 or fields.shape[0] == 0:
        raise DomainError("fields must be (n, channels, height, width) with n >= 1")
    condition_ids = np.asarray(condition_ids, dtype=np.int64)
    if condition_ids.shape != (fields.shape[0],):
        raise DomainError("condition_ids must align with fields")
    if condition_ids.size and (condition_ids.min() < 0 or condition_ids.max() >= len(condition_names)):
        raise DomainError("condition ids out of range for condition_names")

    shape = fields.shape[1:]
    n_cond = len(condition_names)
    weights, biases = _init_params(shape, n_cond, config)
    model = MlpDenoiser(shape, condition_names, weights, biases, config)

    dim = model.dim
    x_all = fields.reshape(fields.shape[0], dim)
    eye = np.eye(n_cond)

    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]

    rng = substream(config.seed, STEP_STREAM)
    lr, b1, b2, ae = config.learning_rate, config.beta1, config.beta2, config.adam_eps
    for step in range(config.steps):
        idx = rng.integers(0, x_all.shape[0], size=config.batch_size)
        u = np.nextafter(rng.random(config.batch_size), 1.0)
        alphas = config.sampler.quantile(u)
        a = np.sqrt(1.0 / (1.0 + np.exp(-alphas)))
        b = np.sqrt(1.0 / (1.0 + np.exp(alphas)))
        eps = rng.standard_normal((config.batch_size, dim))
        x_a = a[:, None] * x_all[idx] + b[:, None] * eps
        onehots = eye[condition_ids[idx]].copy()
        masked = rng.random(config.batch_size) < config.uncond_fraction
        onehots[masked] = 0.0

        loss, g_w, g_b = loss_and_grads(model, x_a, a, b, onehots, eps)
        if not np.isfinite(loss):
            raise TrainingDivergedError(step, loss)
        model.loss_trace.append(loss)

        t = step + 1
        for i in range(len(weights)):
            for p, g, m, v in ((model.weights[i], g_w[i], m_w[i], v_w[i]),
                               (model.biases[i], g_b[i], m_b[i], v_b[i])):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                m_hat = m / (1 - b1**t)
                v_hat = v / (1 - b2**t)
                p -= lr * m_hat / (np.sqrt(v_hat) + ae)
    return model
