from __future__ import annotations

from typing import Any, Optional, Protocol, Tuple, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from anisores.cache import FieldCache
from anisores.exceptions import (
    ConvergenceError,
    InvalidTimeError,
    SingularDifferentialError,
)
from anisores.logging import get_logger

logger = get_logger("anisores.backends")

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_INVERSE = np.array([[1.0, -1.0], [-1.0, 2.0]])
LAMBDA_U = GOLDEN**2
LAMBDA_S = 1.0 / GOLDEN**2
STABLE_VECTOR = np.array([1.0, -GOLDEN]) / np.hypot(1.0, GOLDEN)
UNSTABLE_VECTOR = np.array([GOLDEN, 1.0]) / np.hypot(1.0, GOLDEN)

TIME_TOL = 1e-12


@runtime_checkable
class ModelBackend(Protocol):
    """
    Protocol for an explicit hyperbolic model system.
    Points are arrays of shape (d,) or (N, d); every operation is vectorized over N.
    """

    kind: str
    dim: int
    is_map: bool
    volume_preserving: bool
    smoothness: float

    def flow(self, x: Any, alpha: float) -> np.ndarray:
        """Time-alpha map g_alpha."""
        ...

    def differential(self, x: Any, alpha: float) -> np.ndarray:
        """Dg_alpha(x), shape (..., d, d)."""
        ...

    def stable_direction(
        self, x: Any, iterations: Optional[int] = None
    ) -> Tuple[np.ndarray, float]:
        """Unit stable vectors plus the convergence residual."""
        ...

    def unstable_direction(
        self, x: Any, iterations: Optional[int] = None
    ) -> Tuple[np.ndarray, float]:
        """Unit unstable vectors plus the convergence residual."""
        ...

    def dual_directions(self, x: Any) -> dict[str, np.ndarray]:
        """Covectors spanning E*_-, E*_+ (and E*_0 for flows)."""
        ...

    def horocycle_weight(self, y: Any, alpha: float) -> np.ndarray:
        """phi_alpha(y) = d/drho tau(0, -alpha, y) for the unit-speed horocycle flow."""
        ...

    def horocycle(self, x: Any, rho: float) -> np.ndarray:
        """Unit-speed stable horocycle flow h_rho."""
        ...

    def anosov_constants(self) -> Tuple[float, float]:
        """(C, theta) with ||Dg_alpha v|| <= C theta^alpha ||v|| on E_-."""
        ...

    def torus_distance(self, a: Any, b: Any) -> np.ndarray:
        """Distance on the phase space, respecting the identifications."""
        ...


class TangentData(BaseModel):
    """Splitting data attached to one point."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    point: np.ndarray
    stable_dir: np.ndarray
    unstable_dir: np.ndarray
    flow_dir: Optional[np.ndarray] = None
    residual: float = Field(0.0, description="Angle change of the last direction iteration.")


def as_points(x: Any, dim: int) -> Tuple[np.ndarray, bool]:
    """Return an (N, dim) float array and whether the input was a single point."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != dim:
        raise ValueError(f"Expected points with {dim} coordinates, got shape {arr.shape}")
    return arr.reshape(-1, dim), single


def restore(arr: np.ndarray, single: bool) -> np.ndarray:
    return arr[0] if single else arr


def check_map_time(alpha: float) -> int:
    """Integer step count of a map backend; fractional times are rejected."""
    n = int(np.round(alpha))
    if abs(alpha - n) > TIME_TOL:
        raise InvalidTimeError(f"Map backends only accept integer times, got alpha={alpha}")
    return n


def normalize(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / norms


def line_angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle between the lines spanned by u and v, in [0, pi/2]."""
    un = normalize(u)
    vn = normalize(v)
    sign = np.where(np.sum(un * vn, axis=-1) < 0, -1.0, 1.0)
    # chord form; accurate near parallel
    chord = np.linalg.norm(un - sign[..., None] * vn, axis=-1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


def orient(v: np.ndarray, reference: np.ndarray) -> np.ndarray:
    sign = np.sign(v @ reference)
    sign[sign == 0] = 1.0
    return v * sign[:, None]


def wrap_difference(d: np.ndarray) -> np.ndarray:
    """Shortest representative of a coordinate difference on the unit torus."""
    return d - np.round(d)


def perp(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


class MapBackend:
    """
    Shared machinery for invertible maps of the 2-torus.
    Subclasses supply one step, its inverse and the one-step Jacobian.
    """

    kind = "map"
    dim = 2
    is_map = True
    volume_preserving = True

    def __init__(
        self,
        *,
        smoothness: float = 4.0,
        direction_iterations: int = 40,
        direction_tol: float = 1e-10,
        cache: Optional[FieldCache] = None,
    ):
        self.smoothness = smoothness
        self.direction_iterations = direction_iterations
        self.direction_tol = direction_tol
        self.cache = cache

    def _step(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Subclasses must implement _step()")

    def _step_inverse(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Subclasses must implement _step_inverse()")

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Subclasses must implement _jacobian()")

    @property
    def key(self) -> tuple:
        return (self.kind,)

    def flow(self, x: Any, alpha: float) -> np.ndarray:
        n = check_map_time(alpha)
        pts, single = as_points(x, self.dim)
        y = np.mod(pts, 1.0)
        step = self._step if n >= 0 else self._step_inverse
        for _ in range(abs(n)):
            y = step(y)
        return restore(y, single)

    def differential(self, x: Any, alpha: float) -> np.ndarray:
        n = check_map_time(alpha)
        pts, single = as_points(x, self.dim)
        y = np.mod(pts, 1.0)
        D = np.broadcast_to(np.eye(self.dim), (len(y), self.dim, self.dim)).copy()
        if n >= 0:
            for _ in range(n):
                D = self._jacobian(y) @ D
                y = self._step(y)
        else:
            for _ in range(-n):
                y = self._step_inverse(y)
                J = self._jacobian(y)
                det = np.linalg.det(J)
                if np.any(np.abs(det) < 1e-14):
                    raise SingularDifferentialError(
                        "Singular one-step Jacobian on a backward orbit", stage="differential"
                    )
                D = np.linalg.solve(J, D)
        return restore(D, single)

    def _pullback(self, pts: np.ndarray, depth: int) -> Tuple[np.ndarray, float]:
        # Pull a generic vector back along the forward orbit; two depths give the residual.
        orbit = [pts]
        for _ in range(depth - 1):
            orbit.append(self._step(orbit[-1]))
        w_deep = np.broadcast_to(np.array([1.0, 0.0]), pts.shape).copy()
        w_shallow = w_deep.copy()
        for j in range(depth - 1, -1, -1):
            J = self._jacobian(orbit[j])
            w_deep = normalize(np.linalg.solve(J, w_deep[..., None])[..., 0])
            if j <= depth - 2:
                w_shallow = normalize(np.linalg.solve(J, w_shallow[..., None])[..., 0])
        residual = float(np.max(line_angle(w_deep, w_shallow))) if depth > 1 else np.inf
        return orient(w_deep, STABLE_VECTOR), residual

    def _pushforward(self, pts: np.ndarray, depth: int) -> Tuple[np.ndarray, float]:
        orbit = [pts]
        for _ in range(depth):
            orbit.append(self._step_inverse(orbit[-1]))
        w_deep = np.broadcast_to(np.array([0.0, 1.0]), pts.shape).copy()
        w_shallow = w_deep.copy()
        for j in range(depth, 0, -1):
            J = self._jacobian(orbit[j])
            w_deep = normalize((J @ w_deep[..., None])[..., 0])
            if j <= depth - 1:
                w_shallow = normalize((J @ w_shallow[..., None])[..., 0])
        residual = float(np.max(line_angle(w_deep, w_shallow))) if depth > 1 else np.inf
        return orient(w_deep, UNSTABLE_VECTOR), residual

    def stable_direction(
        self, x: Any, iterations: Optional[int] = None
    ) -> Tuple[np.ndarray, float]:
        depth = iterations or self.direction_iterations
        if depth < 1:
            raise ValueError("iterations must be >= 1")
        pts, single = as_points(x, self.dim)
        vectors, residual = self._pullback(np.mod(pts, 1.0), depth)
        if residual > self.direction_tol:
            raise ConvergenceError(
                f"Stable direction did not converge in {depth} iterations",
                residual=residual,
                stage="stable_direction",
            )
        return restore(vectors, single), residual

    def unstable_direction(
        self, x: Any, iterations: Optional[int] = None
    ) -> Tuple[np.ndarray, float]:
        depth = iterations or self.direction_iterations
        if depth < 1:
            raise ValueError("iterations must be >= 1")
        pts, single = as_points(x, self.dim)
        vectors, residual = self._pushforward(np.mod(pts, 1.0), depth)
        if residual > self.direction_tol:
            raise ConvergenceError(
                f"Unstable direction did not converge in {depth} iterations",
                residual=residual,
                stage="unstable_direction",
            )
        return restore(vectors, single), residual

    def dual_directions(self, x: Any) -> dict[str, np.ndarray]:
        e_minus, _ = self.stable_direction(x)
        e_plus, _ = self.unstable_direction(x)
        # E*_- annihilates E_+, E*_+ annihilates E_-.
        d_minus = normalize(perp(e_plus))
        d_plus = normalize(perp(e_minus))
        d_minus = d_minus * np.sign(np.sum(d_minus * e_minus, axis=-1, keepdims=True))
        d_plus = d_plus * np.sign(np.sum(d_plus * e_plus, axis=-1, keepdims=True))
        return {"minus": d_minus, "plus": d_plus}

    def tangent_data(self, x: Any) -> TangentData:
        pts, _ = as_points(x, self.dim)
        e_minus, res_minus = self.stable_direction(pts[0])
        e_plus, res_plus = self.unstable_direction(pts[0])
        return TangentData(
            point=np.mod(pts[0], 1.0),
            stable_dir=e_minus,
            unstable_dir=e_plus,
            residual=max(res_minus, res_plus),
        )

    def stable_field_on_grid(self, grid: int) -> np.ndarray:
        """Stable unit vectors on the uniform grid, shape (grid, grid, 2)."""
        key = self.key + ("stable_field", grid)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        axis = np.arange(grid) / grid
        pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        vectors, residual = self.stable_direction(pts)
        field = vectors.reshape(grid, grid, 2)
        logger.debug(f"Stable field on {grid}x{grid} grid, residual {residual:.2e}")
        if self.cache is not None:
            self.cache.set(key, field)
        return field

    def stable_expansion(self, y: Any, alpha: float) -> np.ndarray:
        """||Dg_alpha(y) e_-(y)|| for unit stable vectors."""
        pts, single = as_points(y, self.dim)
        e_minus, _ = self.stable_direction(pts)
        D = self.differential(pts, alpha)
        return restore(np.linalg.norm((D @ e_minus[..., None])[..., 0], axis=-1), single)

    def horocycle_weight(self, y: Any, alpha: float) -> np.ndarray:
        return self.stable_expansion(y, -alpha)

    def torus_distance(self, a: Any, b: Any) -> np.ndarray:
        d = wrap_difference(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        return np.linalg.norm(d, axis=-1)

    def speed(self, x: Any, direction: Any) -> np.ndarray:
        """Length of a tangent vector at x in the metric used for unit-speed horocycles."""
        return np.linalg.norm(np.asarray(direction, dtype=float), axis=-1)

    def topological_entropy(self) -> float:
        return float(np.log(LAMBDA_U))
