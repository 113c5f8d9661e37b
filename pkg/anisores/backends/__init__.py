from anisores.backends.base import (
    CAT_INVERSE,
    CAT_MATRIX,
    LAMBDA_S,
    LAMBDA_U,
    STABLE_VECTOR,
    UNSTABLE_VECTOR,
    MapBackend,
    ModelBackend,
    TangentData,
)
from anisores.backends.linear_cat import LinearCat
from anisores.backends.perturbed_cat import PerturbedCat
from anisores.backends.suspension import Suspension

__all__ = [
    "CAT_INVERSE",
    "CAT_MATRIX",
    "LAMBDA_S",
    "LAMBDA_U",
    "STABLE_VECTOR",
    "UNSTABLE_VECTOR",
    "LinearCat",
    "MapBackend",
    "ModelBackend",
    "PerturbedCat",
    "Suspension",
    "TangentData",
]
