"""Weakly supervised referring-expression grounding at desk scale.

Subpackages cover the shared domain types and dataset I/O (``core``), the
synthetic scene benchmark (``synth``), feature construction (``features``),
entity supervision and context pooling (``entity``), the grounding network
(``lang``, ``ground``, ``reconstruct``, ``model``), training
(``train``) and evaluation (``evaluate``, ``cli``).
"""

__version__ = "0.1.0"

from .core import Box, Dataset, Proposal, Query, Scene, compute_iou, load_dataset, save_dataset

__all__ = [
    "Box",
    "Dataset",
    "Proposal",
    "Query",
    "Scene",
    "compute_iou",
    "load_dataset",
    "save_dataset",
    "__version__",
]
