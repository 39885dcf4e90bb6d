"""HTTP shim exposing object-detection models behind the /detect contract."""

from .models import EchoModel, ModelWrapper, SyntheticShapeModel, load_model
from .server import DetectorShimServer, make_server, run_model, serve

__version__ = "0.1.0"

__all__ = [
    "EchoModel",
    "ModelWrapper",
    "SyntheticShapeModel",
    "load_model",
    "DetectorShimServer",
    "make_server",
    "run_model",
    "serve",
]
