from __future__ import annotations

from typing import Any, Literal, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from anisores.backends.base import (
    CAT_INVERSE,
    CAT_MATRIX,
    MapBackend,
    as_points,
    restore,
    wrap_difference,
)
from anisores.cache import FieldCache
from anisores.exceptions import ConvergenceError, InvalidParameterError
from anisores.logging import get_logger

logger = get_logger("anisores.backends.perturbed_cat")

TWO_PI = 2.0 * np.pi


class PerturbedCat(MapBackend):
    """
    Nonlinear Anosov perturbation of the cat map.

    ``additive``: T(x) = Ax + eps (sin 2 pi x2, sin 2 pi x1) mod 1.
    ``shear``:    T = A o S with S(x) = (x1 + eps sin 2 pi x2, x2), exactly area-preserving.
    """

    kind = "perturbed_cat"

    def __init__(
        self,
        epsilon: float = 0.02,
        *,
        shape: Literal["additive", "shear"] = "additive",
        smoothness: float = 4.0,
        direction_iterations: int = 40,
        direction_tol: float = 1e-10,
        leaf_depth: int = 24,
        leaf_rtol: float = 1e-12,
        newton_tol: float = 1e-14,
        cache: Optional[FieldCache] = None,
    ):
        if not 0.0 <= epsilon <= 0.1:
            raise InvalidParameterError(f"epsilon must lie in [0, 0.1], got {epsilon}")
        if shape not in ("additive", "shear"):
            raise InvalidParameterError(f"Unknown perturbation shape {shape!r}")
        super().__init__(
            smoothness=smoothness,
            direction_iterations=direction_iterations,
            direction_tol=direction_tol,
            cache=cache,
        )
        self.epsilon = epsilon
        self.shape = shape
        self.leaf_depth = leaf_depth
        self.leaf_rtol = leaf_rtol
        self.newton_tol = newton_tol
        # The additive shape only preserves area to first order in epsilon.
        self.volume_preserving = shape == "shear" or epsilon == 0.0

    @property
    def key(self) -> tuple:
        return (self.kind, self.shape, self.epsilon)

    def _unwrapped_step(self, x: np.ndarray) -> np.ndarray:
        eps = self.epsilon
        if self.shape == "shear":
            sheared = np.stack([x[:, 0] + eps * np.sin(TWO_PI * x[:, 1]), x[:, 1]], axis=-1)
            return sheared @ CAT_MATRIX.T
        bump = np.stack([np.sin(TWO_PI * x[:, 1]), np.sin(TWO_PI * x[:, 0])], axis=-1)
        return x @ CAT_MATRIX.T + eps * bump

    def _step(self, x: np.ndarray) -> np.ndarray:
        return np.mod(self._unwrapped_step(x), 1.0)

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        eps = self.epsilon
        c1 = np.cos(TWO_PI * x[:, 0])
        c2 = np.cos(TWO_PI * x[:, 1])
        J = np.zeros((len(x), 2, 2))
        if self.shape == "shear":
            S = np.zeros_like(J)
            S[:, 0, 0] = 1.0
            S[:, 0, 1] = TWO_PI * eps * c2
            S[:, 1, 1] = 1.0
            return CAT_MATRIX @ S
        J[:] = CAT_MATRIX
        J[:, 0, 1] += TWO_PI * eps * c2
        J[:, 1, 0] += TWO_PI * eps * c1
        return J

    def _step_inverse(self, y: np.ndarray) -> np.ndarray:
        z = np.mod(y @ CAT_INVERSE.T, 1.0)
        if self.shape == "shear":
            return np.mod(
                np.stack([z[:, 0] - self.epsilon * np.sin(TWO_PI * z[:, 1]), z[:, 1]], axis=-1),
                1.0,
            )
        x = z
        for _ in range(50):
            residual = wrap_difference(self._unwrapped_step(x) - y)
            correction = np.linalg.solve(self._jacobian(x), residual[..., None])[..., 0]
            x = x - correction
            if np.max(np.abs(correction)) < self.newton_tol:
                break
        else:
            worst = float(np.max(np.abs(correction)))
            raise ConvergenceError(
                "Newton inversion of the perturbed map did not converge",
                residual=worst,
                stage="step_inverse",
            )
        return np.mod(x, 1.0)

    def _leaf_field(self, _rho: float, y: np.ndarray) -> np.ndarray:
        vectors, _ = self._pullback(np.mod(y[None, :], 1.0), self.leaf_depth)
        return vectors[0]

    def _integrate_leaf(self, x: np.ndarray, rho: float, samples: Optional[np.ndarray] = None):
        return solve_ivp(
            self._leaf_field,
            (0.0, rho),
            x,
            method="DOP853",
            rtol=self.leaf_rtol,
            atol=self.leaf_rtol * 0.1,
            t_eval=samples,
        )

    def horocycle(self, x: Any, rho: float) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        if rho == 0.0:
            return restore(np.mod(pts, 1.0), single)
        out = np.empty_like(pts)
        for i, p in enumerate(np.mod(pts, 1.0)):
            solution = self._integrate_leaf(p, rho)
            out[i] = solution.y[:, -1]
        return restore(np.mod(out, 1.0), single)

    def horocycle_orbit(self, x: Any, rhos: Any) -> np.ndarray:
        """Points h_rho(x) for a sorted array of rho >= 0 (or <= 0), shape (len(rhos), 2)."""
        p = np.mod(np.asarray(x, dtype=float), 1.0)
        rhos = np.asarray(rhos, dtype=float)
        end = float(rhos[np.argmax(np.abs(rhos))]) if rhos.size else 0.0
        if end == 0.0:
            return np.tile(p, (rhos.size, 1))
        solution = self._integrate_leaf(p, end, samples=rhos)
        return np.mod(solution.y.T, 1.0)

    def anosov_constants(self, grid: int = 32) -> Tuple[float, float]:
        """C = 1 and theta = largest one-step contraction of E_- over a grid."""
        axis = (np.arange(grid) + 0.5) / grid
        pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        theta = float(np.max(self.stable_expansion(pts, 1)))
        return 1.0, theta
