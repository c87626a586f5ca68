"""Process entry point: pick a model, optionally a cassette, serve HTTP."""

from __future__ import annotations

import click
import uvicorn

from .app import create_app
from .cassette import Cassette
from .models import EchoModel, GmmToyModel


@click.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8710, type=int, show_default=True)
@click.option("--echo", "echo_mode", is_flag=True, help="Serve the zero-prediction echo fixture.")
@click.option("--gmm", "gmm_path", type=click.Path(exists=True), default=None, help="Serve a mixture toy model.")
@click.option("--priors", "prior_path", type=click.Path(exists=True), default=None, help="Phrase prior table for the toy model.")
@click.option("--pretrained", default=None, help="Hugging Face id of a latent diffusion pipeline.")
@click.option("--mlm", default="bert-base-uncased", show_default=True, help="Masked-LM id for priors (pretrained mode).")
@click.option("--device", default="cpu", show_default=True)
@click.option("--cassette", "cassette_spec", default=None, help="record:PATH or replay:PATH")
def main(host, port, echo_mode, gmm_path, prior_path, pretrained, mlm, device, cassette_spec):
    """Serve the denoiser-bridge protocol over HTTP."""
    picked = [bool(echo_mode), gmm_path is not None, pretrained is not None]
    if sum(picked) != 1:
        raise click.UsageError("select exactly one of --echo, --gmm, --pretrained")
    if echo_mode:
        model = EchoModel()
    elif gmm_path:
        model = GmmToyModel(gmm_path, prior_path)
    else:
        from .models import PretrainedDiffusionModel

        model = PretrainedDiffusionModel(pretrained, mlm_id=mlm, device=device)
    cassette = None
    if cassette_spec:
        mode, _, path = cassette_spec.partition(":")
        cassette = Cassette(path, mode)
    app = create_app(model, cassette=cassette, echo_payloads=echo_mode)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
