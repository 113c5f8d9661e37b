from __future__ import annotations

from typing import Any, Optional, Tuple

import numpy as np

from anisores.backends.base import (
    CAT_INVERSE,
    CAT_MATRIX,
    LAMBDA_S,
    LAMBDA_U,
    STABLE_VECTOR,
    UNSTABLE_VECTOR,
    MapBackend,
    as_points,
    check_map_time,
    restore,
)


class LinearCat(MapBackend):
    """The hyperbolic toral automorphism x -> Ax mod 1 with A = [[2, 1], [1, 1]]."""

    kind = "linear_cat"

    def _step(self, x: np.ndarray) -> np.ndarray:
        return np.mod(x @ CAT_MATRIX.T, 1.0)

    def _step_inverse(self, y: np.ndarray) -> np.ndarray:
        return np.mod(y @ CAT_INVERSE.T, 1.0)

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(CAT_MATRIX, (len(x), 2, 2))

    def matrix_power(self, n: int, exact: bool = False) -> np.ndarray:
        """
        A^n (negative n allowed), accumulated in Python integers so large |n| cannot wrap.
        ``exact`` keeps the object-dtype integers instead of rounding to float.
        """
        base = CAT_MATRIX if n >= 0 else CAT_INVERSE
        power = np.linalg.matrix_power(np.rint(base).astype(int).astype(object), abs(n))
        return power if exact else power.astype(float)

    def flow(self, x: Any, alpha: float) -> np.ndarray:
        n = check_map_time(alpha)
        pts, single = as_points(x, self.dim)
        # Integer matrix power keeps the orbit exact up to the final reduction.
        y = np.mod(np.mod(pts, 1.0) @ self.matrix_power(n).T, 1.0)
        return restore(y, single)

    def differential(self, x: Any, alpha: float) -> np.ndarray:
        n = check_map_time(alpha)
        pts, single = as_points(x, self.dim)
        D = np.broadcast_to(self.matrix_power(n), (len(pts), 2, 2)).copy()
        return restore(D, single)

    def stable_direction(
        self, x: Any, iterations: Optional[int] = None
    ) -> Tuple[np.ndarray, float]:
        pts, single = as_points(x, self.dim)
        return restore(np.tile(STABLE_VECTOR, (len(pts), 1)), single), 0.0

    def unstable_direction(
        self, x: Any, iterations: Optional[int] = None
    ) -> Tuple[np.ndarray, float]:
        pts, single = as_points(x, self.dim)
        return restore(np.tile(UNSTABLE_VECTOR, (len(pts), 1)), single), 0.0

    def horocycle_weight(self, y: Any, alpha: float) -> np.ndarray:
        n = check_map_time(alpha)
        pts, single = as_points(y, self.dim)
        return restore(np.full(len(pts), LAMBDA_U**n), single)

    def horocycle(self, x: Any, rho: float) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        return restore(np.mod(pts + rho * STABLE_VECTOR, 1.0), single)

    def horocycle_orbit(self, x: Any, rhos: Any) -> np.ndarray:
        rhos = np.asarray(rhos, dtype=float)
        p = np.asarray(x, dtype=float)
        return np.mod(p[None, :] + rhos[:, None] * STABLE_VECTOR, 1.0)

    def renorm_closed_form(self, rho: float, alpha: float) -> float:
        n = check_map_time(alpha)
        return float(rho * LAMBDA_S**n)

    def anosov_constants(self) -> Tuple[float, float]:
        return 1.0, float(LAMBDA_S)
