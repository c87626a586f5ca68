"""Closed-form optimal denoiser for Gaussian-mixture data.

For a mixture with weights w_k, means mu_k and per-component Gaussian noise,
the perturbed field x_alpha = a x + b eps has an exact posterior over
components, and the minimum-MSE prediction of eps is available in closed
form:

    E[x | x_alpha, k] = mu_k + (a s_k^2 / (a^2 s_k^2 + b^2)) (x_alpha - a mu_k)
    eps_hat = (x_alpha - a E[x | x_alpha]) / b

with E[x | x_alpha] the responsibility-weighted mixture of the per-component
posterior means. Conditions select (or intersect) named component subsets,
which yields exact conditional and unconditional denoisers and exact
log-densities for the same model — the ground truth the estimator tests run
against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from ..conditions import COMPONENT_SUBSET, PHRASE_SET, PROMPT, DenoiserCondition
from ..diffusion import LogSnrPoint
from ..errors import DomainError, ShapeMismatchError, UnsupportedConditionError

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GmmModel:
    """Gaussian mixture over latent fields with named component subsets."""

    shape: tuple[int, int, int]
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D), D = C*H*W
    variances: np.ndarray  # (K, 1) isotropic or (K, D) diagonal
    subsets: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 3 or any(s < 1 for s in shape):
            raise DomainError(f"shape must be three positive ints, got {self.shape!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or np.any(w <= 0):
            raise DomainError("weights must be a non-empty vector of positive reals")
        if abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"weights must sum to 1, got {w.sum()!r}")
        k = w.size
        d = shape[0] * shape[1] * shape[2]
        m = np.asarray(self.means, dtype=np.float64).reshape(k, -1)
        if m.shape[1] != d:
            raise DomainError(f"means must have {d} values per component, got {m.shape[1]}")
        v = np.asarray(self.variances, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != k or v.shape[1] not in (1, d):
            raise DomainError("variances must be per-component scalars or per-dimension vectors")
        if np.any(v <= 0):
            raise DomainError("variances must be positive")
        subsets: dict[str, tuple[int, ...]] = {}
        for name, ids in self.subsets.items():
            ids = tuple(sorted(set(int(i) for i in ids)))
            if not ids or min(ids) < 0 or max(ids) >= k:
                raise DomainError(f"subset {name!r} selects invalid components {ids}")
            subsets[name] = ids
        object.__setattr__(self, "subsets", subsets)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    # ---------------------------------------------------------------- basics

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_ids(self, condition: DenoiserCondition) -> tuple[int, ...]:
        """Resolve a condition to the component subset it selects."""
        if condition.is_unconditional:
            return tuple(range(self.n_components))
        if condition.kind == COMPONENT_SUBSET:
            bad = [i for i in condition.components if i < 0 or i >= self.n_components]
            if bad:
                raise UnsupportedConditionError(f"components {bad} out of range")
            return condition.components
        if condition.kind in (PROMPT, PHRASE_SET):
            names = (
                condition.text.split()
                if condition.kind == PROMPT
                else condition.phrase_text().split()
            )
            ids: set[int] | None = None
            for name in names:
                if name not in self.subsets:
                    raise UnsupportedConditionError(f"no component subset named {name!r}")
                sel = set(self.subsets[name])
                ids = sel if ids is None else ids & sel
            if not ids:
                raise UnsupportedConditionError(f"phrases {names} select no common component")
            return tuple(sorted(ids))
        raise UnsupportedConditionError(f"condition kind {condition.kind!r}")

    def _log_cond_weights(self, condition: DenoiserCondition) -> np.ndarray:
        ids = np.asarray(self.component_ids(condition))
        logw = np.full(self.n_components, -np.inf)
        sub = self.weights[ids]
        logw[ids] = np.log(sub / sub.sum())
        return logw

    def subset_weight(self, condition: DenoiserCondition) -> float:
        """Total prior mass of the components a condition selects."""
        ids = np.asarray(self.component_ids(condition))
        return float(self.weights[ids].sum())

    # ------------------------------------------------------------- densities

    def log_density(self, x: np.ndarray, condition: DenoiserCondition) -> float:
        """Exact mixture log-density of a clean field under the condition."""
        xf = np.asarray(x, dtype=np.float64).reshape(-1)
        if xf.size != self.dim:
            raise ShapeMismatchError("x", (self.dim,), (xf.size,))
        logw = self._log_cond_weights(condition)
        if self.variances.shape[1] == 1:
            log_comp = -0.5 * (
                self.dim * (np.log(self.variances[:, 0]) + _LOG_2PI)
                + np.sum((xf - self.means) ** 2, axis=1) / self.variances[:, 0]
            )
        else:
            log_comp = -0.5 * np.sum(
                np.log(self.variances) + _LOG_2PI + (xf - self.means) ** 2 / self.variances,
                axis=1,
            )
        return float(logsumexp(logw + log_comp))

    def log_density_ratio(
        self, x: np.ndarray, condition: DenoiserCondition, base: DenoiserCondition
    ) -> float:
        """log p(x | condition) - log p(x | base): the exact pointwise information."""
        return self.log_density(x, condition) - self.log_density(x, base)

    # -------------------------------------------------------------- denoiser

    def predict_eps(
        self, x_alpha: np.ndarray, point: LogSnrPoint, condition: DenoiserCondition
    ) -> np.ndarray:
        """Exact MMSE prediction of the injected noise under the condition."""
        a = point.signal_scale
        b = point.noise_scale
        if b == 0.0 or a == 0.0:
            raise DomainError(f"log-SNR {point.alpha} is outside the representable band")
        arr = np.asarray(x_alpha, dtype=np.float64)
        if arr.shape[-3:] != self.shape:
            raise ShapeMismatchError("x_alpha", self.shape, arr.shape[-3:])
        batch_shape = arr.shape[:-3]
        xf = arr.reshape(-1, self.dim)  # (B, D)

        logw = self._log_cond_weights(condition)  # (K,)
        post_var = a * a * self.variances + b * b  # (K, 1|D)
        diff = xf[:, None, :] - a * self.means[None, :, :]  # (B, K, D)
        if self.variances.shape[1] == 1:
            quad = np.sum(diff * diff, axis=2) / post_var[:, 0]
            logdet = self.dim * np.log(post_var[:, 0])
        else:
            quad = np.sum(diff * diff / post_var[None, :, :], axis=2)
            logdet = np.sum(np.log(post_var), axis=1)
        log_resp = logw[None, :] - 0.5 * (quad + logdet + self.dim * _LOG_2PI)
        log_resp -= logsumexp(log_resp, axis=1, keepdims=True)
        resp = np.exp(log_resp)  # (B, K)

        gain = a * self.variances / post_var  # (K, 1|D)
        post_mean = self.means[None, :, :] + gain[None, :, :] * diff  # (B, K, D)
        e_x = np.einsum("bk,bkd->bd", resp, post_mean)
        eps_hat = (xf - a * e_x) / b
        return eps_hat.reshape(*batch_shape, *self.shape)

    # -------------------------------------------------------------- sampling

    def sample(
        self, rng: np.random.Generator, condition: DenoiserCondition, count: int = 1
    ) -> np.ndarray:
        """Draw clean fields from the (conditioned) mixture: (count, C, H, W)."""
        if count < 1:
            raise DomainError(f"count must be >= 1, got {count}")
        ids = np.asarray(self.component_ids(condition))
        w = self.weights[ids] / self.weights[ids].sum()
        picks = ids[rng.choice(ids.size, size=count, p=w)]
        sd = np.sqrt(self.variances)
        out = self.means[picks] + rng.standard_normal((count, self.dim)) * sd[picks]
        return out.reshape(count, *self.shape)

    # ------------------------------------------------------------ persistence

    def to_json(self) -> str:
        return json.dumps(
            {
                "shape": list(self.shape),
                "weights": self.weights.tolist(),
                "means": self.means.tolist(),
                "variances": self.variances.tolist(),
                "subsets": {k: list(v) for k, v in self.subsets.items()},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "GmmModel":
        raw = json.loads(text)
        return cls(
            shape=tuple(raw["shape"]),
            weights=np.asarray(raw["weights"], dtype=np.float64),
            means=np.asarray(raw["means"], dtype=np.float64),
            variances=np.asarray(raw["variances"], dtype=np.float64),
            subsets={k: tuple(v) for k, v in raw.get("subsets", {}).items()},
        )

    @classmethod
    def load(cls, path: str | Path) -> "GmmModel":
        return cls.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())
