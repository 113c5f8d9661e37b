from __future__ import annotations

from typing import Any, Callable, Optional

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, Field

from anisores.exceptions import InvalidParameterError, ResolutionError

TWO_PI = 2.0 * np.pi


def mode_list(K: int, dim: int = 2) -> np.ndarray:
    """Lattice points with |k|_inf <= K; row (k1 + K)(2K + 1) + (k2 + K) holds (k1, k2)."""
    axis = np.arange(-K, K + 1)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def mode_index(k: Any, K: int) -> np.ndarray:
    """Row of lattice point(s) k in ``mode_list(K)``; -1 outside the truncation."""
    k = np.atleast_2d(np.asarray(k, dtype=np.int64))
    inside = np.all(np.abs(k) <= K, axis=-1)
    width = 2 * K + 1
    index = np.zeros(len(k), dtype=np.int64)
    for j in range(k.shape[-1]):
        index = index * width + (k[:, j] + K)
    return np.where(inside, index, -1)


class FourierObservable(BaseModel):
    """Finite trigonometric polynomial sum_k c_k e^(2 pi i k.x) on the unit torus."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    modes: np.ndarray = Field(..., description="Integer lattice points, shape (M, d).")
    coefficients: np.ndarray = Field(..., description="Complex coefficients, shape (M,).")

    @property
    def dim(self) -> int:
        return int(self.modes.shape[1])

    @property
    def mean(self) -> complex:
        zero = np.all(self.modes == 0, axis=-1)
        return complex(np.sum(self.coefficients[zero]))

    @property
    def max_mode(self) -> int:
        return int(np.max(np.abs(self.modes))) if len(self.modes) else 0

    def evaluate(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        phases = np.exp(TWO_PI * 1j * (x[..., : self.dim] @ self.modes.T))
        return phases @ self.coefficients

    def gradient(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        phases = np.exp(TWO_PI * 1j * (x[..., : self.dim] @ self.modes.T))
        return (phases * self.coefficients) @ (TWO_PI * 1j * self.modes)

    def sup_bound(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)))

    def to_grid(self, grid: int) -> np.ndarray:
        if 2 * self.max_mode >= grid:
            raise ResolutionError(f"Grid {grid} aliases modes up to {self.max_mode}")
        axis = np.arange(grid) / grid
        pts = np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), axis=-1)
        return self.evaluate(pts)

    def to_vector(self, K: int) -> np.ndarray:
        """Coefficients in the ``mode_list(K)`` basis; modes beyond K are dropped."""
        vec = np.zeros((2 * K + 1) ** self.dim, dtype=complex)
        rows = mode_index(self.modes, K)
        keep = rows >= 0
        np.add.at(vec, rows[keep], self.coefficients[keep])
        return vec

    @classmethod
    def from_vector(cls, vec: Any, K: int, dim: int = 2, tol: float = 0.0) -> FourierObservable:
        vec = np.asarray(vec, dtype=complex)
        modes = mode_list(K, dim)
        keep = np.abs(vec) > tol
        return cls(modes=modes[keep], coefficients=vec[keep])

    @classmethod
    def from_grid(cls, values: Any, K: Optional[int] = None, tol: float = 1e-14):
        values = np.asarray(values)
        grid = values.shape[0]
        dim = values.ndim
        coefficients = scipy.fft.fftn(values) / grid**dim
        K = K if K is not None else grid // 2 - 1
        freqs = np.mod(mode_list(K, dim), grid)
        picked = coefficients[tuple(freqs.T)]
        return cls.from_vector(picked, K, dim, tol=tol)

    def line_integral(self, x: Any, direction: Any, T: float) -> complex:
        """int_0^T phi(x + rho v) drho for a constant direction field v."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(direction, dtype=float)
        freq = TWO_PI * (self.modes @ v)
        base = np.exp(TWO_PI * 1j * (self.modes @ x))
        with np.errstate(divide="ignore", invalid="ignore"):
            pieces = np.where(
                np.abs(freq) > 1e-14, (np.exp(1j * freq * T) - 1.0) / (1j * freq), T
            )
        return complex(np.sum(self.coefficients * base * pieces))

    def deviation_bound(self, direction: Any) -> float:
        """sum over k != 0 of |c_k| / (pi |k.v|): bound on |int_0^T (phi - mean)|."""
        freq = np.abs(self.modes @ np.asarray(direction, dtype=float))
        nonzero = np.any(self.modes != 0, axis=-1)
        if np.any(freq[nonzero] < 1e-14):
            raise InvalidParameterError("Observable has a mode orthogonal to the direction")
        return float(np.sum(np.abs(self.coefficients[nonzero]) / (np.pi * freq[nonzero])))


def single_mode(k: Any, amplitude: complex = 1.0) -> FourierObservable:
    k = np.atleast_2d(np.asarray(k, dtype=np.int64))
    return FourierObservable(modes=k, coefficients=np.array([amplitude], dtype=complex))


def constant_observable(value: complex = 1.0, dim: int = 2) -> FourierObservable:
    return single_mode(np.zeros(dim, dtype=np.int64), value)


def random_trig_polynomial(
    rng: np.random.Generator,
    K: int,
    terms: int = 6,
    dim: int = 2,
    zero_mean: bool = False,
    real: bool = False,
) -> FourierObservable:
    """Random polynomial with `terms` distinct modes |k|_inf <= K and unit-scale coefficients."""
    candidates = mode_list(K, dim)
    if zero_mean:
        candidates = candidates[np.any(candidates != 0, axis=-1)]
    picked = candidates[rng.choice(len(candidates), size=terms, replace=False)]
    coefficients = rng.normal(size=terms) + 1j * rng.normal(size=terms)
    coefficients /= np.sqrt(terms)
    if real:
        picked = np.concatenate([picked, -picked])
        coefficients = np.concatenate([coefficients, np.conj(coefficients)]) / 2.0
        merged = {}
        for k, c in zip(map(tuple, picked), coefficients):
            merged[k] = merged.get(k, 0.0) + c
        picked = np.array(list(merged.keys()), dtype=np.int64)
        coefficients = np.array(list(merged.values()), dtype=complex)
    return FourierObservable(modes=picked, coefficients=coefficients)


class ProductObservable(BaseModel):
    """Observable on the suspension: a base polynomial times a profile of the fibre time."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    base: FourierObservable
    profile: Callable[[np.ndarray], np.ndarray]

    @property
    def dim(self) -> int:
        return 3

    def evaluate(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base.evaluate(x[..., :2]) * self.profile(x[..., 2])
