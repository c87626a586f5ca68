"""Command-line front end.

Every subcommand resolves its configuration with the precedence
flag > config-file key > built-in default, echoes the resolved values into a
``manifest.json`` next to its outputs, and exits with a documented code:

    0  success
    2  usage error (unknown flags, bad values)
    3  unreadable or invalid input file
    4  estimation or numeric failure
    5  bridge transport failure

Failures also emit a one-line JSON error record on stderr so wrappers can
parse the cause without scraping tracebacks.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .conditions import DenoiserCondition, prompt, unconditional
from .denoisers import BridgeClient, BridgedDenoiser, GmmModel, MlpDenoiser, TrainConfig, train_toy_denoiser
from .diffusion import LogSnrSampler
from .errors import BridgeTransportError, InfodecompError
from .estimator import chain_rule_check, estimate_mi, estimate_pid, mmse_curves, mmse_curves_csv, orthogonality_residual
from .experiments import EngineConfig, PromptCase, export_pid_maps, load_cases, run_bias_audit
from .heatmaps import Heatmap, export_heatmap, read_pfm, render_grayscale, write_pgm
from .pid import discrete_pid_oracle, gate_joint, oracle_table_csv
from .priors import BridgePriorProvider, GmmPriorProvider, TablePriorProvider


def _make_priors(priors_path: str | None, denoiser):
    """Priors fall back to the denoiser's own sources: mixture weights for
    toy models, the logprob endpoint for bridged ones."""
    if priors_path:
        return TablePriorProvider.load(priors_path)
    if isinstance(denoiser, GmmModel):
        return GmmPriorProvider(denoiser)
    if isinstance(denoiser, BridgedDenoiser):
        return BridgePriorProvider(denoiser._client)
    raise _fail(EXIT_INPUT, click.UsageError("--priors is required for toy checkpoints"))

EXIT_INPUT = 3
EXIT_ESTIMATION = 4
EXIT_BRIDGE = 5


def _fail(code: int, exc: Exception) -> "click.exceptions.Exit":
    record = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(record), err=True)
    return click.exceptions.Exit(code)


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise _fail(EXIT_INPUT, exc)


def _resolve_config(ctx: click.Context, config_path: str | None) -> dict:
    """flag > config key > default, with the winner recorded per key."""
    resolved = dict(ctx.params)
    resolved.pop("config", None)
    if config_path:
        overrides = _load_json(config_path)
        for key, value in overrides.items():
            key = key.replace("-", "_")
            if key not in resolved:
                raise _fail(EXIT_INPUT, click.UsageError(f"unknown config key {key!r}"))
            source = ctx.get_parameter_source(key)
            if source is not None and source.name != "COMMANDLINE":
                resolved[key] = tuple(value) if isinstance(value, list) else value
    return resolved


def _parse_condition(spec: str | None) -> DenoiserCondition:
    if spec is None or spec.strip() in ("", "uncond", "unconditional"):
        return unconditional()
    return prompt(spec.strip())


def _parse_field(spec: str, shape_spec: str) -> np.ndarray:
    shape = tuple(int(v) for v in shape_spec.split(","))
    if spec.startswith("@"):
        raw = _load_json(spec[1:])
        values = np.asarray(raw["values"], dtype=np.float64)
        shape = tuple(raw.get("shape", shape))
    else:
        values = np.asarray([float(v) for v in spec.split(",")], dtype=np.float64)
    try:
        return values.reshape(shape)
    except ValueError as exc:
        raise _fail(EXIT_INPUT, exc)


def _parse_sampler(spec: str) -> LogSnrSampler:
    loc, scale, lo, hi = (float(v) for v in spec.split(","))
    return LogSnrSampler(location=loc, scale=scale, lower=lo, upper=hi)


def _make_denoiser(gmm: str | None, toy: str | None, bridge: str | None):
    picked = [v for v in (gmm, toy, bridge) if v]
    if len(picked) != 1:
        raise _fail(EXIT_INPUT, click.UsageError("select exactly one of --gmm, --toy, --bridge"))
    try:
        if gmm:
            return GmmModel.load(gmm)
        if toy:
            return MlpDenoiser.load(toy)
    except (OSError, ValueError, KeyError) as exc:
        raise _fail(EXIT_INPUT, exc)
    return BridgedDenoiser(BridgeClient(bridge))


def _write_manifest(out_dir: Path, command: str, resolved: dict, started: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(resolved.items())},
        "version": __version__,
        "wall_time_s": round(time.time() - started, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def _run(fn):
    """Translate package errors into documented exit codes."""
    try:
        return fn()
    except click.exceptions.Exit:
        raise
    except BridgeTransportError as exc:
        raise _fail(EXIT_BRIDGE, exc)
    except InfodecompError as exc:
        raise _fail(EXIT_ESTIMATION, exc)


@click.group(
    epilog=(
        "Exit codes: 0 success; 2 usage error; 3 unreadable or invalid input "
        "file; 4 estimation or numeric failure; 5 bridge transport failure. "
        "Failures emit a JSON error record on stderr."
    )
)
@click.version_option(version=__version__)
@click.option(
    "--threads",
    default=None,
    type=int,
    help="Cap numeric worker threads; estimates are bit-identical at any cap.",
)
def main(threads):
    """Information estimates and decompositions from denoising models."""
    if threads is not None:
        if threads < 1:
            raise click.BadParameter("--threads must be >= 1")
        try:
            from threadpoolctl import threadpool_limits

            threadpool_limits(limits=threads)
        except ImportError:  # best effort without the optional limiter
            import os

            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = str(threads)


_common = [
    click.option("--config", type=click.Path(exists=True), default=None, help="JSON config file; flags win."),
    click.option("--gmm", type=click.Path(exists=True), default=None, help="Mixture-model JSON file."),
    click.option("--toy", type=click.Path(exists=True), default=None, help="Trained toy checkpoint."),
    click.option("--bridge", default=None, help="Bridge server URL."),
    click.option("--x", "x_spec", default="0.0", help="Comma floats or @file.json."),
    click.option("--shape", default="1,1,1", help="Field shape c,h,w for --x floats."),
    click.option("--seed", default=0, type=int, show_default=True),
    click.option("--n-alpha", default=50, type=int, show_default=True),
    click.option("--n-eps", default=1, type=int, show_default=True),
    click.option("--form", default="orthogonal", type=click.Choice(["standard", "orthogonal"]), show_default=True),
    click.option("--sampler", "sampler_spec", default="0,2,-12,12", show_default=True, help="location,scale,lower,upper"),
    click.option("--out", default=None, type=click.Path(), help="Output directory."),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@main.command("oracle-pid")
@click.option("--gate", type=click.Choice(["xor", "rdn", "unq"]), default=None)
@click.option("--joint", "joint_path", type=click.Path(exists=True), default=None, help="JSON joint table.")
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="Write the per-event table here.")
def oracle_pid(gate, joint_path, csv_path):
    """Exact expected atoms for a discrete joint distribution."""

    def body():
        if (gate is None) == (joint_path is None):
            raise _fail(EXIT_INPUT, click.UsageError("pass exactly one of --gate or --joint"))
        if gate:
            joint = gate_joint(gate)
        else:
            from .pid import DiscreteJoint

            joint = DiscreteJoint(np.asarray(_load_json(joint_path)["table"], dtype=np.float64))
        result = discrete_pid_oracle(joint)
        if csv_path:
            Path(csv_path).write_text(oracle_table_csv(result))
        click.echo(
            json.dumps(
                {
                    "r": result.expected.redundancy,
                    "u1": result.expected.unique1,
                    "u2": result.expected.unique2,
                    "s": result.expected.synergy,
                    "mi_joint": result.expected_mi_joint,
                    "events": len(result.events),
                },
                indent=2,
            )
        )

    _run(body)


@main.command("estimate-mi")
@common_options
@click.option("--cond", required=True, help="Condition text (subset names for mixture models).")
@click.option("--base", default=None, help="Base condition; default unconditional.")
@click.pass_context
def estimate_mi_cmd(ctx, config, gmm, toy, bridge, x_spec, shape, seed, n_alpha, n_eps, form, sampler_spec, out, cond, base):
    """Pointwise information of --cond relative to --base at one field."""

    def body():
        started = time.time()
        cfg = _resolve_config(ctx, config)
        denoiser = _make_denoiser(cfg["gmm"], cfg["toy"], cfg["bridge"])
        x = _parse_field(cfg["x_spec"], cfg["shape"])
        est = estimate_mi(
            x,
            _parse_condition(cfg["cond"]),
            denoiser,
            base=_parse_condition(cfg["base"]),
            sampler=_parse_sampler(cfg["sampler_spec"]),
            seed=cfg["seed"],
            n_alpha=cfg["n_alpha"],
            n_eps=cfg["n_eps"],
            form=cfg["form"],
        )
        payload = est.to_json_dict()
        payload["pointwise_map"] = est.pointwise_map.tolist()
        text = json.dumps(payload, indent=2, sort_keys=True)
        click.echo(text)
        if cfg["out"]:
            out_dir = Path(cfg["out"])
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "estimate.json").write_text(text)
            export_heatmap(
                Heatmap(est.pointwise_map, term="mi", prompt=cfg["cond"]), out_dir / "mi_map"
            )
            _write_manifest(out_dir, "estimate-mi", cfg, started)

    _run(body)


@main.command("estimate-pid")
@common_options
@click.option("--phrase1", required=True)
@click.option("--phrase2", required=True)
@click.option("--context", default=None)
@click.option("--priors", "priors_path", type=click.Path(exists=True), default=None, help="Prior table JSON; default mixture weights.")
@click.option("--mode", default="signed", type=click.Choice(["signed", "clamped"]), show_default=True)
@click.pass_context
def estimate_pid_cmd(ctx, config, gmm, toy, bridge, x_spec, shape, seed, n_alpha, n_eps, form, sampler_spec, out, phrase1, phrase2, context, priors_path, mode):
    """Redundancy/uniqueness/synergy maps for two phrases at one field."""

    def body():
        started = time.time()
        cfg = _resolve_config(ctx, config)
        denoiser = _make_denoiser(cfg["gmm"], cfg["toy"], cfg["bridge"])
        priors = _make_priors(cfg["priors_path"], denoiser)
        x = _parse_field(cfg["x_spec"], cfg["shape"])
        ctx_text = cfg["context"]
        p1 = priors.lookup(cfg["phrase1"], ctx_text)
        p2 = priors.lookup(cfg["phrase2"], ctx_text)
        result = estimate_pid(
            x,
            prompt(cfg["phrase1"]),
            prompt(cfg["phrase2"]),
            denoiser,
            p1,
            p2,
            context=_parse_condition(ctx_text) if ctx_text else None,
            sampler=_parse_sampler(cfg["sampler_spec"]),
            seed=cfg["seed"],
            n_alpha=cfg["n_alpha"],
            n_eps=cfg["n_eps"],
            form=cfg["form"],
        )
        tokens = [cfg["phrase1"], cfg["phrase2"]] + ([ctx_text] if ctx_text else [])
        case = PromptCase(
            prompt=" ".join(tokens),
            phrase1=(0,),
            phrase2=(1,),
            context=(2,) if ctx_text else None,
        )
        out_dir = Path(cfg["out"] or ".")
        scalars = export_pid_maps(result, out_dir, case, mode=cfg["mode"])
        click.echo(json.dumps(scalars["atoms"], indent=2, sort_keys=True))
        _write_manifest(out_dir, "estimate-pid", cfg, started)

    _run(body)


@main.command("bias-audit")
@common_options
@click.option("--cases", "cases_path", type=click.Path(exists=True), required=True)
@click.option("--priors", "priors_path", type=click.Path(exists=True), default=None)
@click.pass_context
def bias_audit_cmd(ctx, config, gmm, toy, bridge, x_spec, shape, seed, n_alpha, n_eps, form, sampler_spec, out, cases_path, priors_path):
    """Image-level redundancy table across an audit case file."""

    def body():
        started = time.time()
        cfg = _resolve_config(ctx, config)
        denoiser = _make_denoiser(cfg["gmm"], cfg["toy"], cfg["bridge"])
        priors = _make_priors(cfg["priors_path"], denoiser)
        cases = _run_input(lambda: load_cases(cfg["cases_path"]))
        latent_shape = denoiser.shape if hasattr(denoiser, "shape") else tuple(
            int(v) for v in denoiser.latent_shape()
        )
        engine = EngineConfig(
            denoiser=denoiser,
            priors=priors,
            sampler=_parse_sampler(cfg["sampler_spec"]),
            seed=cfg["seed"],
            n_alpha=cfg["n_alpha"],
            n_eps=cfg["n_eps"],
            form=cfg["form"],
            latent_shape=latent_shape,
            x_source="sample" if cfg["gmm"] else "normal",
        )
        table = run_bias_audit(cases, engine)
        out_dir = Path(cfg["out"] or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "audit.csv").write_text(table.to_csv())
        (out_dir / "audit_wide.csv").write_text(table.to_wide_csv())
        _write_manifest(out_dir, "bias-audit", cfg, started)
        click.echo(json.dumps({"rows": len(table.rows), "averages": table.attribute_averages}, indent=2))

    _run(body)


def _run_input(fn):
    try:
        return fn()
    except (OSError, ValueError, KeyError) as exc:
        raise _fail(EXIT_INPUT, exc)


@main.command("intervene")
@common_options
@click.option("--original", required=True)
@click.option("--edited", required=True)
@click.option("--noise-alpha", default=0.0, type=float, show_default=True)
@click.option("--steps", default=10, type=int, show_default=True)
@click.pass_context
def intervene_cmd(ctx, config, gmm, toy, bridge, x_spec, shape, seed, n_alpha, n_eps, form, sampler_spec, out, original, edited, noise_alpha, steps):
    """Re-denoise a field under an edited condition and report similarity."""
    from .experiments import prompt_intervention

    def body():
        started = time.time()
        cfg = _resolve_config(ctx, config)
        denoiser = _make_denoiser(cfg["gmm"], cfg["toy"], cfg["bridge"])
        x = _parse_field(cfg["x_spec"], cfg["shape"])
        rep = prompt_intervention(
            x,
            _parse_condition(cfg["original"]),
            _parse_condition(cfg["edited"]),
            cfg["noise_alpha"],
            cfg["steps"],
            denoiser,
            seed=cfg["seed"],
            sampler=_parse_sampler(cfg["sampler_spec"]),
        )
        payload = {
            "mse": rep.mse,
            "correlation": rep.correlation,
            "noise_alpha": rep.noise_alpha,
            "steps": rep.steps,
            "edited_field": rep.edited_field.tolist(),
        }
        click.echo(json.dumps({k: payload[k] for k in ("mse", "correlation")}, indent=2))
        if cfg["out"]:
            out_dir = Path(cfg["out"])
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "intervention.json").write_text(json.dumps(payload, indent=2))
            _write_manifest(out_dir, "intervene", cfg, started)

    _run(body)


@main.command("mmse-curves")
@common_options
@click.option("--cond", required=True)
@click.option("--grid", default="-8:8:17", show_default=True, help="lo:hi:points")
@click.pass_context
def mmse_curves_cmd(ctx, config, gmm, toy, bridge, x_spec, shape, seed, n_alpha, n_eps, form, sampler_spec, out, cond, grid):
    """Empirical conditional/unconditional errors along a log-SNR grid."""

    def body():
        started = time.time()
        cfg = _resolve_config(ctx, config)
        denoiser = _make_denoiser(cfg["gmm"], cfg["toy"], cfg["bridge"])
        lo, hi, n = cfg["grid"].split(":")
        alpha_grid = np.linspace(float(lo), float(hi), int(n))
        rows = mmse_curves(
            _parse_field(cfg["x_spec"], cfg["shape"]),
            _parse_condition(cfg["cond"]),
            denoiser,
            alpha_grid,
            seed=cfg["seed"],
            n_eps=max(cfg["n_eps"], 2),
        )
        text = mmse_curves_csv(rows)
        out_dir = Path(cfg["out"] or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "mmse_curves.csv").write_text(text)
        _write_manifest(out_dir, "mmse-curves", cfg, started)
        click.echo(text.splitlines()[0])
        click.echo(f"{len(rows)} grid points -> {out_dir / 'mmse_curves.csv'}")

    _run(body)


@main.command("orthogonality")
@common_options
@click.option("--cond", required=True)
@click.option("--alphas", default="-4,-1,0,1,4", show_default=True)
@click.option("--draws", default=20000, type=int, show_default=True)
@click.pass_context
def orthogonality_cmd(ctx, config, gmm, toy, bridge, x_spec, shape, seed, n_alpha, n_eps, form, sampler_spec, out, cond, alphas, draws):
    """Residual correlation between the condition gap and the optimal error."""

    def body():
        started = time.time()
        cfg = _resolve_config(ctx, config)
        denoiser = _make_denoiser(cfg["gmm"], cfg["toy"], cfg["bridge"])
        condition = _parse_condition(cfg["cond"])
        if hasattr(denoiser, "sample"):
            x_draw = lambda rng, n: denoiser.sample(rng, condition, n)
        else:
            x_draw = _parse_field(cfg["x_spec"], cfg["shape"])
        rows = orthogonality_residual(
            x_draw,
            condition,
            denoiser,
            [float(a) for a in cfg["alphas"].split(",")],
            seed=cfg["seed"],
            n_draws=cfg["draws"],
        )
        payload = [
            {"alpha": r.alpha, "mean": r.mean, "std_error": r.std_error, "n_draws": r.n_draws}
            for r in rows
        ]
        click.echo(json.dumps(payload, indent=2))
        if cfg["out"]:
            out_dir = Path(cfg["out"])
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "residuals.json").write_text(json.dumps(payload, indent=2))
            _write_manifest(out_dir, "orthogonality", cfg, started)

    _run(body)


@main.command("train-toy")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True, help="JSON: shape, fields, labels, condition_names.")
@click.option("--out", "out_path", type=click.Path(), required=True, help="Checkpoint path.")
@click.option("--hidden", default="64,64", show_default=True)
@click.option("--steps", default=5000, type=int, show_default=True)
@click.option("--batch-size", default=64, type=int, show_default=True)
@click.option("--learning-rate", default=1e-3, type=float, show_default=True)
@click.option("--uncond-fraction", default=0.3, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
def train_toy_cmd(data_path, out_path, hidden, steps, batch_size, learning_rate, uncond_fraction, seed):
    """Fit the toy denoiser and write a JSON checkpoint."""

    def body():
        raw = _load_json(data_path)
        fields = np.asarray(raw["fields"], dtype=np.float64)
        shape = tuple(raw["shape"])
        fields = fields.reshape(-1, *shape)
        cfg = TrainConfig(
            hidden=tuple(int(v) for v in hidden.split(",")),
            steps=steps,
            batch_size=batch_size,
            learning_rate=learning_rate,
            uncond_fraction=uncond_fraction,
            seed=seed,
        )
        model = train_toy_denoiser(
            fields, np.asarray(raw["labels"]), tuple(raw["condition_names"]), cfg
        )
        model.save(out_path)
        first = model.loss_trace[0] if model.loss_trace else None
        last = model.loss_trace[-1] if model.loss_trace else None
        click.echo(json.dumps({"steps": steps, "first_loss": first, "final_loss": last, "checkpoint": str(out_path)}))

    _run(body)


@main.command("render")
@click.option("--pfm", "pfm_path", type=click.Path(exists=True), required=True)
@click.option("--mode", default="signed", type=click.Choice(["signed", "clamped"]), show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def render_cmd(pfm_path, mode, out_path):
    """Convert a stored float map to an 8-bit preview."""

    def body():
        values = _run_input(lambda: read_pfm(pfm_path)).astype(np.float64)
        write_pgm(out_path, render_grayscale(Heatmap(values), mode))
        click.echo(f"wrote {out_path}")

    _run(body)


@main.command("chain-rule")
@common_options
@click.option("--phrase1", required=True)
@click.option("--phrase2", required=True)
@click.pass_context
def chain_rule_cmd(ctx, config, gmm, toy, bridge, x_spec, shape, seed, n_alpha, n_eps, form, sampler_spec, out, phrase1, phrase2):
    """Joint information versus its chain-rule split, on shared draws."""

    def body():
        cfg = _resolve_config(ctx, config)
        denoiser = _make_denoiser(cfg["gmm"], cfg["toy"], cfg["bridge"])
        report = chain_rule_check(
            _parse_field(cfg["x_spec"], cfg["shape"]),
            prompt(cfg["phrase1"]),
            prompt(cfg["phrase2"]),
            denoiser,
            sampler=_parse_sampler(cfg["sampler_spec"]),
            seed=cfg["seed"],
            n_alpha=cfg["n_alpha"],
            n_eps=cfg["n_eps"],
            form=cfg["form"],
        )
        click.echo(
            json.dumps(
                {
                    "mi_joint": report.mi_joint.image_level,
                    "mi_y2": report.mi_y2.image_level,
                    "cmi_y1_given_y2": report.cmi_y1_given_y2.image_level,
                    "discrepancy": report.discrepancy,
                    "pooled_se": report.pooled_se,
                },
                indent=2,
                sort_keys=True,
            )
        )

    _run(body)


if __name__ == "__main__":
    main()
