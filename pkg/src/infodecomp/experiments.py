"""Reusable experiment runners: bias audits, decomposition cases, prompt
intervention.

A case names two phrases (token index ranges into a prompt) and optionally a
context range. On toy mixture models the prompt tokens are component-subset
names, so the same case files drive both desk-scale and bridged runs. Audits
compute one image-level redundancy per case and min-max normalize across the
whole audit; failed rows are kept as explicit gaps rather than silently
dropped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conditions import DenoiserCondition, phrase_set
from .denoisers.base import Denoiser
from .diffusion import LogSnrPoint, LogSnrSampler
from .errors import DomainError
from .estimator import ORTHOGONAL, PidMaps, estimate_pid
from .fields import ensure_field
from .heatmaps import Heatmap, export_heatmap, normalize_dataset
from .priors import PriorProvider
from .rng import CASE_STREAM, EPS_STREAM, substream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PromptCase:
    """One analysis case: a prompt with two phrase selections."""

    prompt: str
    phrase1: tuple[int, ...]
    phrase2: tuple[int, ...]
    context: tuple[int, ...] | None = None
    tag: str = ""
    x_values: tuple[float, ...] | None = None  # optional pinned latent

    def __post_init__(self):
        n = len(self.prompt.split())
        for name, sel in (("phrase1", self.phrase1), ("phrase2", self.phrase2)):
            if not sel:
                raise DomainError(f"{name} selection is empty")
            if any(i < 0 or i >= n for i in sel):
                raise DomainError(f"{name} indices out of range for prompt {self.prompt!r}")
        if set(self.phrase1) & set(self.phrase2):
            raise DomainError("phrase selections overlap")
        if self.context is not None:
            overlap = set(self.context) & (set(self.phrase1) | set(self.phrase2))
            if overlap:
                raise DomainError(f"context overlaps phrase selections at {sorted(overlap)}")

    def condition1(self) -> DenoiserCondition:
        return phrase_set(self.prompt, self.phrase1)

    def condition2(self) -> DenoiserCondition:
        return phrase_set(self.prompt, self.phrase2)

    def context_condition(self) -> DenoiserCondition | None:
        if self.context is None:
            return None
        return phrase_set(self.prompt, self.context)

    def phrase1_text(self) -> str:
        return self.condition1().phrase_text()

    def phrase2_text(self) -> str:
        return self.condition2().phrase_text()

    @classmethod
    def from_json_dict(cls, raw: dict) -> "PromptCase":
        return cls(
            prompt=raw["prompt"],
            phrase1=tuple(raw["phrase1"]),
            phrase2=tuple(raw["phrase2"]),
            context=tuple(raw["context"]) if raw.get("context") else None,
            tag=raw.get("tag", ""),
            x_values=tuple(raw["x"]) if raw.get("x") else None,
        )


def load_cases(path: str | Path) -> list[PromptCase]:
    raw = json.loads(Path(path).read_text())
    return [PromptCase.from_json_dict(item) for item in raw["cases"]]


@dataclass(frozen=True)
class EngineConfig:
    """Everything an experiment needs besides the case itself."""

    denoiser: Denoiser
    priors: PriorProvider
    sampler: LogSnrSampler = field(default_factory=LogSnrSampler)
    seed: int = 0
    n_alpha: int = 50
    n_eps: int = 1
    form: str = ORTHOGONAL
    latent_shape: tuple[int, int, int] = (1, 1, 1)
    x_source: str = "sample"  # sample (mixture models) | normal | pinned


def _case_field(case: PromptCase, engine: EngineConfig, case_index: int) -> np.ndarray:
    if case.x_values is not None:
        return ensure_field(
            np.asarray(case.x_values, dtype=np.float64).reshape(engine.latent_shape), "case x"
        )
    rng = substream(engine.seed, CASE_STREAM, case_index)
    if engine.x_source == "sample":
        if not hasattr(engine.denoiser, "sample"):
            raise DomainError("x_source 'sample' needs a denoiser that can draw clean fields")
        joint = phrase_set(case.prompt, tuple(case.phrase1) + tuple(case.phrase2))
        return engine.denoiser.sample(rng, joint, 1)[0]
    if engine.x_source == "normal":
        return rng.standard_normal(engine.latent_shape)
    raise DomainError(f"unknown x_source {engine.x_source!r} and no pinned x on the case")


def run_case_pid(case: PromptCase, engine: EngineConfig, case_index: int = 0) -> PidMaps:
    """Estimate the decomposition for one case (conditional when it has context)."""
    x = _case_field(case, engine, case_index)
    ctx = case.context_condition()
    ctx_text = ctx.phrase_text() if ctx is not None else None
    prior1 = engine.priors.lookup(case.phrase1_text(), ctx_text)
    prior2 = engine.priors.lookup(case.phrase2_text(), ctx_text)
    return estimate_pid(
        x,
        case.condition1(),
        case.condition2(),
        engine.denoiser,
        prior1,
        prior2,
        context=ctx,
        sampler=engine.sampler,
        seed=engine.seed,
        n_alpha=engine.n_alpha,
        n_eps=engine.n_eps,
        form=engine.form,
    )


@dataclass(frozen=True)
class BiasRow:
    occupation: str
    attribute: str
    raw_redundancy: float | None
    normalized: float | None
    error: str | None = None


@dataclass(frozen=True)
class BiasTable:
    rows: list[BiasRow]
    attribute_averages: dict[str, float]

    def to_csv(self) -> str:
        lines = ["occupation,attribute,raw_redundancy,normalized"]
        for r in self.rows:
            raw = "" if r.raw_redundancy is None else repr(r.raw_redundancy)
            norm = "" if r.normalized is None else repr(r.normalized)
            lines.append(f"{r.occupation},{r.attribute},{raw},{norm}")
        for attr, avg in self.attribute_averages.items():
            lines.append(f"average,{attr},,{avg!r}")
        return "\n".join(lines) + "\n"

    def to_wide_csv(self, digits: int = 3) -> str:
        """One row per occupation, one normalized column per attribute, a
        trailing average row: the layout of published bias tables."""
        attributes = sorted({r.attribute for r in self.rows})
        occupations: list[str] = []
        for r in self.rows:
            if r.occupation not in occupations:
                occupations.append(r.occupation)
        cells: dict[tuple[str, str], str] = {}
        for r in self.rows:
            cells[(r.occupation, r.attribute)] = (
                "" if r.normalized is None else f"{r.normalized:.{digits}f}"
            )
        lines = ["occupation," + ",".join(attributes)]
        for occ in occupations:
            lines.append(occ + "," + ",".join(cells.get((occ, a), "") for a in attributes))
        lines.append(
            "average,"
            + ",".join(
                f"{self.attribute_averages[a]:.{digits}f}" if a in self.attribute_averages else ""
                for a in attributes
            )
        )
        return "\n".join(lines) + "\n"


def run_bias_audit(cases: list[PromptCase], engine: EngineConfig) -> BiasTable:
    """Image-level redundancy per (occupation, attribute) pair, normalized
    across the whole audit, with per-attribute averages of the normalized
    values."""
    raw: list[float | None] = []
    errors: list[str | None] = []
    for i, case in enumerate(cases):
        try:
            result = run_case_pid(case, engine, case_index=i)
            raw.append(result.atoms.redundancy)
            errors.append(None)
        except Exception as exc:  # row-level isolation; the table shows the gap
            log.error("bias-audit case %d (%s/%s) failed: %s",
                      i, case.phrase1_text(), case.phrase2_text(), exc)
            raw.append(None)
            errors.append(str(exc))

    present = [v for v in raw if v is not None]
    normalized_present = list(normalize_dataset(present)) if present else []
    it = iter(normalized_present)
    normalized = [None if v is None else float(next(it)) for v in raw]

    rows = [
        BiasRow(
            occupation=case.phrase1_text(),
            attribute=case.phrase2_text(),
            raw_redundancy=raw[i],
            normalized=normalized[i],
            error=errors[i],
        )
        for i, case in enumerate(cases)
    ]
    averages: dict[str, float] = {}
    for attr in sorted({r.attribute for r in rows}):
        vals = [r.normalized for r in rows if r.attribute == attr and r.normalized is not None]
        if vals:
            averages[attr] = float(np.mean(vals))
    return BiasTable(rows=rows, attribute_averages=averages)


def export_pid_maps(
    result: PidMaps, out_dir: str | Path, case: PromptCase, mode: str = "signed"
) -> dict:
    """Write the four atom maps plus a scalars JSON; returns the scalars."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    slug1 = _slug(case.phrase1_text())
    slug2 = _slug(case.phrase2_text())
    maps = {
        "r": result.r_map,
        "u1": result.u1_map,
        "u2": result.u2_map,
        "s": result.s_map,
    }
    for term, values in maps.items():
        hm = Heatmap(values=values, term=term, prompt=case.prompt)
        export_heatmap(hm, out / f"{term}_{slug1}_{slug2}", mode=mode)
    scalars = {
        "prompt": case.prompt,
        "phrase1": case.phrase1_text(),
        "phrase2": case.phrase2_text(),
        "context": case.context_condition().phrase_text() if case.context else None,
        "atoms": {
            "redundancy": result.atoms.redundancy,
            "unique1": result.atoms.unique1,
            "unique2": result.atoms.unique2,
            "synergy": result.atoms.synergy,
        },
        "mi": {
            "phrase1": result.mi1.to_json_dict(),
            "phrase2": result.mi2.to_json_dict(),
            "joint": result.mi_joint.to_json_dict(),
        },
        "priors": {
            "phrase1_log_prob": result.prior1.log_prob,
            "phrase2_log_prob": result.prior2.log_prob,
        },
    }
    (out / f"scalars_{slug1}_{slug2}.json").write_text(json.dumps(scalars, indent=2))
    return scalars


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in text.strip().lower()).strip("-") or "phrase"


@dataclass(frozen=True)
class InterventionReport:
    edited_field: np.ndarray
    mse: float
    correlation: float
    noise_alpha: float
    steps: int


def prompt_intervention(
    x: np.ndarray,
    original: DenoiserCondition,
    edited: DenoiserCondition,
    noise_alpha: float,
    steps: int,
    denoiser: Denoiser,
    *,
    seed: int = 0,
    sampler: LogSnrSampler | None = None,
) -> InterventionReport:
    """Noise the field to ``noise_alpha``, then denoise deterministically
    under the edited condition over a fixed grid of decreasing noise.

    Each step re-estimates the clean field from the current state and carries
    the noise estimate forward:

        x_hat_t = (x_t - b_t * eps_hat_t) / a_t
        x_{t+1} = a_{t+1} * x_hat_t + b_{t+1} * eps_hat_t

    Reports mean squared difference and Pearson correlation between the input
    and the final clean-field estimate. ``original`` is recorded for the
    caller's bookkeeping; the trajectory is driven by ``edited`` alone.
    """
    del original  # the edit defines the trajectory; the original names the baseline
    x = ensure_field(x, "x")
    sampler = sampler if sampler is not None else LogSnrSampler()
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    if not (sampler.lower <= noise_alpha <= sampler.upper):
        raise DomainError(
            f"noise_alpha {noise_alpha} outside sampler truncation [{sampler.lower}, {sampler.upper}]"
        )
    grid = np.linspace(noise_alpha, sampler.upper, steps)
    eps = substream(seed, EPS_STREAM).standard_normal(x.shape)
    point = LogSnrPoint(float(grid[0]))
    x_t = point.signal_scale * x + point.noise_scale * eps

    x_hat = x_t
    for t, alpha in enumerate(grid):
        point = LogSnrPoint(float(alpha))
        eps_hat = denoiser.predict_eps(x_t, point, edited)
        x_hat = (x_t - point.noise_scale * eps_hat) / point.signal_scale
        if not np.all(np.isfinite(x_hat)):
            raise DomainError(f"non-finite trajectory at step {t} (alpha={float(alpha)!r})")
        if t + 1 < steps:
            nxt = LogSnrPoint(float(grid[t + 1]))
            x_t = nxt.signal_scale * x_hat + nxt.noise_scale * eps_hat

    mse = float(np.mean((x_hat - x) ** 2))
    correlation = _pearson(x.ravel(), x_hat.ravel())
    return InterventionReport(
        edited_field=x_hat,
        mse=mse,
        correlation=correlation,
        noise_alpha=float(noise_alpha),
        steps=steps,
    )


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    sa = a.std()
    sb = b.std()
    if sa == 0.0 or sb == 0.0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float(np.corrcoef(a, b)[0, 1])
