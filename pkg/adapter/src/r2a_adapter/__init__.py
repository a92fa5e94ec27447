"""HTTP adapter exposing embedding and masked-LM scoring backends."""

from .app import create_app, serve
from .backends import Backend, BackendError, MockBackend, RealBackend, make_backend
from .config import AdapterConfig
from .sampling import uniform_frame_indices

__version__ = "0.1.0"
