"""
anisores - Ruelle-Pollicott resonances, anisotropic norms and horocycle integrals
on hyperbolic toral models.
"""

__version__ = "0.1.0"

from .backends import LinearCat, PerturbedCat, Suspension
from .cache_backends import MemoryCache
from .config import AnisoresConfig, RunConfig
from .dynamics_models import build_backend, lambda_min_estimate, topological_entropy
from .exceptions import (
    AnisoresError,
    ConfigError,
    ConvergenceError,
    GeometryError,
    InvalidParameterError,
    UnknownSeriesError,
)
from .exporter import Exporter
from .horocycle_expansion import CutoffFamily, cutoff_family, expansion_fit
from .horocycle_lab import horocycle_integral, renorm_time, tau_identity_suite
from .observables import FourierObservable
from .pipeline import ResultStore, emit_plots, run_pipeline
from .resonances import ResonanceRecord, resonances, spectral_projector
from .spectral_blocks import AnisotropicIndex, build_cone_ensemble, build_partition
from .transfer_operator import TransferMatrix, WeightSpec, assemble_transfer, weight_cocycle
from .validators import parse_config, serialize_config

__all__ = [
    "__version__",
    "AnisoresConfig",
    "RunConfig",
    "parse_config",
    "serialize_config",
    "LinearCat",
    "PerturbedCat",
    "Suspension",
    "build_backend",
    "lambda_min_estimate",
    "topological_entropy",
    "AnisotropicIndex",
    "build_partition",
    "build_cone_ensemble",
    "FourierObservable",
    "WeightSpec",
    "TransferMatrix",
    "assemble_transfer",
    "weight_cocycle",
    "ResonanceRecord",
    "resonances",
    "spectral_projector",
    "renorm_time",
    "horocycle_integral",
    "tau_identity_suite",
    "CutoffFamily",
    "cutoff_family",
    "expansion_fit",
    "ResultStore",
    "run_pipeline",
    "emit_plots",
    "Exporter",
    "MemoryCache",
    "AnisoresError",
    "ConfigError",
    "ConvergenceError",
    "GeometryError",
    "InvalidParameterError",
    "UnknownSeriesError",
]
