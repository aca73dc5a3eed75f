"""HTTP embedding sidecar and offline embedding-file exporter."""

from .app import create_app
from .encoder import DEFAULT_MODEL_ID, HashingEncoder, load_encoder
from .export import export, read_texts, write_jsonl, write_semb

__version__ = "0.1.0"
