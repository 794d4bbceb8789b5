"""Score server: diffusion priors behind a binary tensor HTTP protocol."""

__version__ = "0.1.0"

from .app import make_server, serve_forever
from .models import (AnalyticGmmModel, TorchScriptModel, ToyCheckpointModel,
                     load_model)
from .wire import PROTO_HEADER, PROTO_VERSION, decode_tensor, encode_tensor
