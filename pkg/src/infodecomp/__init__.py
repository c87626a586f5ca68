"""Denoiser-based information estimation and pointwise decomposition."""

from . import conditions
from .conditions import DenoiserCondition, component_subset, phrase_set, prompt, unconditional
from .denoisers import BridgeClient, BridgedDenoiser, GmmModel, MlpDenoiser, TrainConfig, train_toy_denoiser
from .diffusion import LogSnrPoint, LogSnrSampler, forward_perturb, logistic_quantile, sample_log_snr
from .estimator import (
    MiEstimate,
    PidMaps,
    chain_rule_check,
    estimate_mi,
    estimate_pid,
    mmse_curves,
    orthogonality_residual,
)
from .experiments import (
    BiasTable,
    EngineConfig,
    InterventionReport,
    PromptCase,
    prompt_intervention,
    run_bias_audit,
    run_case_pid,
)
from .heatmaps import (
    Heatmap,
    bilinear_upsample,
    intersection_baseline,
    normalize_dataset,
    render,
    threshold_mask,
)
from .pid import (
    DiscreteJoint,
    PidAtoms,
    PointwiseInputs,
    decompose_field,
    decompose_pointwise,
    discrete_pid_oracle,
    gate_joint,
    redundancy_pointwise,
)
from .priors import BridgePriorProvider, GmmPriorProvider, PhraseLogProb, TablePriorProvider

__version__ = "0.1.0"

__all__ = [
    "BiasTable",
    "BridgeClient",
    "BridgePriorProvider",
    "BridgedDenoiser",
    "DenoiserCondition",
    "DiscreteJoint",
    "EngineConfig",
    "GmmModel",
    "GmmPriorProvider",
    "Heatmap",
    "InterventionReport",
    "LogSnrPoint",
    "LogSnrSampler",
    "MiEstimate",
    "MlpDenoiser",
    "PhraseLogProb",
    "PidAtoms",
    "PidMaps",
    "PointwiseInputs",
    "PromptCase",
    "TablePriorProvider",
    "TrainConfig",
    "bilinear_upsample",
    "chain_rule_check",
    "component_subset",
    "conditions",
    "decompose_field",
    "decompose_pointwise",
    "discrete_pid_oracle",
    "estimate_mi",
    "estimate_pid",
    "forward_perturb",
    "gate_joint",
    "intersection_baseline",
    "logistic_quantile",
    "mmse_curves",
    "normalize_dataset",
    "orthogonality_residual",
    "phrase_set",
    "prompt",
    "prompt_intervention",
    "render",
    "run_bias_audit",
    "run_case_pid",
    "sample_log_snr",
    "threshold_mask",
    "train_toy_denoiser",
    "unconditional",
]
