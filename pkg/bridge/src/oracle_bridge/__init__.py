"""HTTP adapter exposing a scene describer and a text embedder behind the
drivepatch wire protocol (/v1/describe and /v1/embed)."""

__version__ = "0.1.0"

from .app import BridgeConfig, create_app
from .backends import Describer, Embedder, StubDescriber, StubEmbedder, load_backends
