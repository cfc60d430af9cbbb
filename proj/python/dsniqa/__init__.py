"""Superpixel-guided blind image quality assessment."""

from dsniqa._core import (
    DsnError,
    Model,
    adaptive_pool,
    plcc,
    segment_probmap,
    slic_labels,
    srcc,
    version,
)

__all__ = [
    "DsnError",
    "Model",
    "adaptive_pool",
    "plcc",
    "segment_probmap",
    "slic_labels",
    "srcc",
    "version",
]

__version__ = version()
