"""splatcodec: multi-rate compression for 3D Gaussian splatting models."""

from .model import (
    GaussianCloud,
    load_model,
    read_model,
    save_model,
    write_model,
)

__all__ = [
    "GaussianCloud",
    "load_model",
    "read_model",
    "save_model",
    "write_model",
]

__version__ = "0.1.0"
