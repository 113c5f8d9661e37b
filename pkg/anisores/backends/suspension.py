from __future__ import annotations

from typing import Any, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from anisores.backends.base import (
    CAT_INVERSE,
    CAT_MATRIX,
    LAMBDA_S,
    LAMBDA_U,
    STABLE_VECTOR,
    UNSTABLE_VECTOR,
    TangentData,
    as_points,
    normalize,
    restore,
    wrap_difference,
)
from anisores.cache import FieldCache
from anisores.exceptions import InvalidParameterError, NonMixingModelError
from anisores.logging import get_logger

logger = get_logger("anisores.backends.suspension")

TWO_PI = 2.0 * np.pi
SERIES_DEPTH = 44


class Suspension:
    """
    Suspension flow over the cat map with roof r(x) = 1 + eps2 cos(2 pi x1).

    Points are (x1, x2, u) with 0 <= u < r(x); (x, r(x)) is identified with (Ax, 0).
    The horocycle metric on E_- is |a| lambda_s^(u / r(x)) for the vector (a v_s, *),
    which makes the stable expansion of g_alpha exactly lambda_s^(Delta Theta).
    """

    kind = "suspension"
    dim = 3
    is_map = False
    volume_preserving = True

    def __init__(
        self,
        epsilon2: float = 0.1,
        *,
        smoothness: float = 4.0,
        leaf_rtol: float = 1e-12,
        cache: Optional[FieldCache] = None,
    ):
        if not 0.0 <= epsilon2 < 1.0:
            raise InvalidParameterError(f"epsilon2 must lie in [0, 1), got {epsilon2}")
        self.epsilon2 = epsilon2
        self.smoothness = smoothness
        self.leaf_rtol = leaf_rtol
        self.cache = cache

    @property
    def key(self) -> tuple:
        return (self.kind, self.epsilon2)

    @property
    def is_mixing(self) -> bool:
        return self.epsilon2 > 0.0

    @property
    def roof_min(self) -> float:
        return 1.0 - self.epsilon2

    @property
    def roof_max(self) -> float:
        return 1.0 + self.epsilon2

    def roof(self, x: np.ndarray) -> np.ndarray:
        return 1.0 + self.epsilon2 * np.cos(TWO_PI * np.asarray(x)[..., 0])

    def roof_gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        grad = np.zeros(x.shape)
        grad[..., 0] = -TWO_PI * self.epsilon2 * np.sin(TWO_PI * x[..., 0])
        return grad

    def mean_roof(self, grid: int = 64) -> float:
        axis = np.arange(grid) / grid
        return float(np.mean(self.roof(np.stack([axis, np.zeros(grid)], axis=-1))))

    def _advance(self, pts: np.ndarray, alpha: float, with_derivative: bool = False):
        x = np.mod(pts[:, :2], 1.0)
        u = pts[:, 2] + alpha
        k = np.zeros(len(pts), dtype=int)
        P = np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy()
        G = np.zeros((len(pts), 2))
        while True:
            m = u >= self.roof(x)
            if not m.any():
                break
            if with_derivative:
                G[m] -= np.einsum("ni,nij->nj", self.roof_gradient(x[m]), P[m])
                P[m] = CAT_MATRIX @ P[m]
            u[m] -= self.roof(x[m])
            x[m] = np.mod(x[m] @ CAT_MATRIX.T, 1.0)
            k[m] += 1
        while True:
            m = u < 0.0
            if not m.any():
                break
            x[m] = np.mod(x[m] @ CAT_INVERSE.T, 1.0)
            u[m] += self.roof(x[m])
            k[m] -= 1
            if with_derivative:
                P[m] = CAT_INVERSE @ P[m]
                G[m] += np.einsum("ni,nij->nj", self.roof_gradient(x[m]), P[m])
        out = np.concatenate([x, u[:, None]], axis=-1)
        return out, k, P, G

    def flow(self, x: Any, alpha: float) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        out, _, _, _ = self._advance(pts, alpha)
        return restore(out, single)

    def flow_with_crossings(self, x: Any, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
        """Time-alpha image and the signed number of roof crossings."""
        pts, single = as_points(x, self.dim)
        out, k, _, _ = self._advance(pts, alpha)
        return restore(out, single), (k[0] if single else k)

    def differential(self, x: Any, alpha: float) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        _, _, P, G = self._advance(pts, alpha, with_derivative=True)
        D = np.zeros((len(pts), 3, 3))
        D[:, :2, :2] = P
        D[:, 2, :2] = G
        D[:, 2, 2] = 1.0
        return restore(D, single)

    def theta(self, x: Any) -> np.ndarray:
        """Fractional fibre time u / r(x)."""
        pts, single = as_points(x, self.dim)
        return restore(pts[:, 2] / self.roof(pts[:, :2]), single)

    def delta_theta(self, x: Any, alpha: float) -> np.ndarray:
        """Theta(g_alpha x) - Theta(x) counted with roof crossings."""
        pts, single = as_points(x, self.dim)
        out, k, _, _ = self._advance(pts, alpha)
        value = k + out[:, 2] / self.roof(out[:, :2]) - pts[:, 2] / self.roof(pts[:, :2])
        return restore(value, single)

    def _stable_slope(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros(len(x))
        base = np.mod(x, 1.0)
        for j in range(SERIES_DEPTH):
            total += LAMBDA_S**j * (self.roof_gradient(base) @ STABLE_VECTOR)
            base = np.mod(base @ CAT_MATRIX.T, 1.0)
        return total

    def _unstable_slope(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros(len(x))
        base = np.mod(x, 1.0)
        for j in range(1, SERIES_DEPTH + 1):
            base = np.mod(base @ CAT_INVERSE.T, 1.0)
            total -= LAMBDA_U ** (-j) * (self.roof_gradient(base) @ UNSTABLE_VECTOR)
        return total

    def stable_direction(
        self, x: Any, iterations: Optional[int] = None
    ) -> Tuple[np.ndarray, float]:
        pts, single = as_points(x, self.dim)
        slope = self._stable_slope(pts[:, :2])
        v = np.concatenate([np.tile(STABLE_VECTOR, (len(pts), 1)), slope[:, None]], axis=-1)
        residual = float(LAMBDA_S**SERIES_DEPTH * TWO_PI * self.epsilon2)
        return restore(normalize(v), single), residual

    def unstable_direction(
        self, x: Any, iterations: Optional[int] = None
    ) -> Tuple[np.ndarray, float]:
        pts, single = as_points(x, self.dim)
        slope = self._unstable_slope(pts[:, :2])
        v = np.concatenate([np.tile(UNSTABLE_VECTOR, (len(pts), 1)), slope[:, None]], axis=-1)
        residual = float(LAMBDA_S**SERIES_DEPTH * TWO_PI * self.epsilon2)
        return restore(normalize(v), single), residual

    def flow_direction(self, x: Any) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        return restore(np.tile([0.0, 0.0, 1.0], (len(pts), 1)), single)

    def dual_directions(self, x: Any) -> dict[str, np.ndarray]:
        pts, single = as_points(x, self.dim)
        e_minus, _ = self.stable_direction(pts)
        e_plus, _ = self.unstable_direction(pts)
        e_zero = self.flow_direction(pts)
        duals = {
            "minus": normalize(np.cross(e_plus, e_zero)),
            "plus": normalize(np.cross(e_minus, e_zero)),
            "zero": normalize(np.cross(e_minus, e_plus)),
        }
        for name, e in (("minus", e_minus), ("plus", e_plus), ("zero", e_zero)):
            sign = np.sign(np.sum(duals[name] * e, axis=-1, keepdims=True))
            duals[name] = duals[name] * sign
        return {name: restore(v, single) for name, v in duals.items()}

    def tangent_data(self, x: Any) -> TangentData:
        pts, _ = as_points(x, self.dim)
        e_minus, res = self.stable_direction(pts[0])
        e_plus, _ = self.unstable_direction(pts[0])
        return TangentData(
            point=pts[0],
            stable_dir=e_minus,
            unstable_dir=e_plus,
            flow_dir=np.array([0.0, 0.0, 1.0]),
            residual=res,
        )

    def stable_expansion(self, y: Any, alpha: float) -> np.ndarray:
        """||Dg_alpha e_-|| in the horocycle metric."""
        return LAMBDA_S ** self.delta_theta(y, alpha)

    def horocycle_weight(self, y: Any, alpha: float) -> np.ndarray:
        return self.stable_expansion(y, -alpha)

    def speed(self, x: Any, direction: Any) -> np.ndarray:
        pts, single = as_points(x, self.dim)
        vec = np.atleast_2d(np.asarray(direction, dtype=float))
        coefficient = np.abs(vec[:, :2] @ STABLE_VECTOR)
        return restore(coefficient * LAMBDA_S ** (pts[:, 2] / self.roof(pts[:, :2])), single)

    def _leaf_offset(self, x: np.ndarray, sigma: float) -> float:
        base = x.copy()
        total = 0.0
        for j in range(SERIES_DEPTH):
            shifted = base + sigma * LAMBDA_S**j * STABLE_VECTOR
            total += float(self.roof(shifted) - self.roof(base))
            base = np.mod(base @ CAT_MATRIX.T, 1.0)
        return total

    def _leaf_point(self, p: np.ndarray, sigma: float) -> np.ndarray:
        x = p[:2] + sigma * STABLE_VECTOR
        u = p[2] + self._leaf_offset(np.mod(p[:2], 1.0), sigma)
        out, _, _, _ = self._advance(np.array([[x[0], x[1], u]]), 0.0)
        return out[0]

    def _sigma_rate(self, p: np.ndarray):
        x0 = np.mod(p[:2], 1.0)

        def rate(_rho: float, sigma: np.ndarray) -> np.ndarray:
            s = float(sigma[0])
            u = p[2] + self._leaf_offset(x0, s)
            r = float(self.roof(x0 + s * STABLE_VECTOR))
            return np.array([LAMBDA_S ** (-u / r)])

        return rate

    def _require_mixing(self) -> None:
        if not self.is_mixing:
            raise NonMixingModelError(
                "Constant-roof suspension is not mixing; horocycle experiments need eps2 > 0"
            )

    def horocycle(self, x: Any, rho: float) -> np.ndarray:
        self._require_mixing()
        pts, single = as_points(x, self.dim)
        out = np.empty_like(pts)
        for i, p in enumerate(pts):
            if rho == 0.0:
                out[i] = p
                continue
            solution = solve_ivp(
                self._sigma_rate(p),
                (0.0, rho),
                [0.0],
                method="DOP853",
                rtol=self.leaf_rtol,
                atol=self.leaf_rtol * 0.1,
            )
            out[i] = self._leaf_point(p, float(solution.y[0, -1]))
        return restore(out, single)

    def horocycle_orbit(self, x: Any, rhos: Any) -> np.ndarray:
        self._require_mixing()
        p = np.asarray(x, dtype=float)
        rhos = np.asarray(rhos, dtype=float)
        end = float(rhos[np.argmax(np.abs(rhos))]) if rhos.size else 0.0
        if end == 0.0:
            return np.tile(p, (rhos.size, 1))
        solution = solve_ivp(
            self._sigma_rate(p),
            (0.0, end),
            [0.0],
            method="DOP853",
            rtol=self.leaf_rtol,
            atol=self.leaf_rtol * 0.1,
            t_eval=rhos,
        )
        return np.array([self._leaf_point(p, float(s)) for s in solution.y[0]])

    def anosov_constants(self, samples: int = 256, seed: int = 0) -> Tuple[float, float]:
        """theta = lambda_s^(1 / r_max); C sampled from Euclidean stable expansion."""
        theta = float(LAMBDA_S ** (1.0 / self.roof_max))
        rng = np.random.default_rng(seed)
        pts = rng.random((samples, 3))
        pts[:, 2] *= self.roof(pts[:, :2])
        e_minus, _ = self.stable_direction(pts)
        C = 1.0
        for alpha in np.linspace(0.25, 4.0, 16):
            D = self.differential(pts, alpha)
            growth = np.linalg.norm((D @ e_minus[..., None])[..., 0], axis=-1)
            C = max(C, float(np.max(growth / theta**alpha)))
        return C, theta

    def torus_distance(self, a: Any, b: Any) -> np.ndarray:
        pa, single = as_points(a, self.dim)
        pb, _ = as_points(b, self.dim)
        pa, _, _, _ = self._advance(pa, 0.0)
        pb, _, _, _ = self._advance(pb, 0.0)

        def plain(p: np.ndarray, q: np.ndarray) -> np.ndarray:
            dx = wrap_difference(p[:, :2] - q[:, :2])
            return np.sqrt(np.sum(dx**2, axis=-1) + (p[:, 2] - q[:, 2]) ** 2)

        # Points near the roof have a nearby representative on the other side.
        above = pb.copy()
        above[:, :2] = np.mod(pb[:, :2] @ CAT_INVERSE.T, 1.0)
        above[:, 2] = pb[:, 2] + self.roof(above[:, :2])
        below = pb.copy()
        below[:, 2] = pb[:, 2] - self.roof(pb[:, :2])
        below[:, :2] = np.mod(pb[:, :2] @ CAT_MATRIX.T, 1.0)
        d = np.minimum(plain(pa, pb), np.minimum(plain(pa, above), plain(pa, below)))
        return restore(d, single)

    def topological_entropy(self) -> float:
        return float(np.log(LAMBDA_U) / self.mean_roof())
