"""HTTP bridge serving latent-denoiser predictions and masked-LM priors."""

from .app import create_app
from .models import EchoModel, GmmToyModel, ServedModel

__version__ = "0.1.0"

__all__ = ["create_app", "EchoModel", "GmmToyModel", "ServedModel", "__version__"]
