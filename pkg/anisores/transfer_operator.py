from __future__ import annotations

import time
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
import scipy.fft
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.interpolate import BarycentricInterpolator
from scipy.special import gammaincinv, gammaln, roots_genlaguerre

from anisores.backends import LAMBDA_U, LinearCat, ModelBackend, Suspension
from anisores.backends.base import as_points, check_map_time
from anisores.cache import FieldCache
from anisores.exceptions import (
    DivergentIntegralError,
    InvalidParameterError,
    InvalidTimeError,
    ResolutionError,
)
from anisores.logging import get_logger
from anisores.observables import mode_index, mode_list

logger = get_logger("anisores.transfer_operator")

TWO_PI = 2.0 * np.pi
PRUNE_THRESHOLD = 1e-14
DENSE_FRACTION = 0.25
LAGUERRE_NODES = 128
TAIL_TOL = 1e-12
FFT_CHUNK_BYTES = 1 << 27


class WeightSpec(BaseModel):
    """
    Multiplicative weight cocycle phi_alpha of L_alpha phi = phi_alpha (phi o g_-alpha).

    ``potential``: phi_alpha = exp(int_0^alpha V o g_-a da), a sum over the backward orbit for maps.
    ``horocycle``: phi_alpha = d/drho tau(0, -alpha, .) of the unit-speed horocycle flow.
    ``constant``: phi_alpha = c^alpha.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")

    kind: Literal["potential", "horocycle", "constant"] = "horocycle"
    constant: float = Field(1.0, gt=0.0)
    potential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    quad_step: float = Field(1e-3, gt=0.0, le=1e-3, description="Time-integral panel length.")

    @property
    def key(self) -> tuple:
        if self.kind == "potential":
            return (self.kind, id(self.potential), self.quad_step)
        if self.kind == "constant":
            return (self.kind, self.constant)
        return (self.kind,)

    def _potential_values(self, y: np.ndarray) -> np.ndarray:
        values = np.asarray(self.potential(y), dtype=float)
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("Potential V has non-finite values", stage="weight")
        return values

    def _log_weight_forward(self, backend: ModelBackend, pts: np.ndarray, alpha: float):
        if backend.is_map:
            n = check_map_time(alpha)
            total = np.zeros(len(pts))
            y = pts
            for _ in range(n):
                total += self._potential_values(y)
                y = backend.flow(y, -1)
            return total
        panels = max(1, int(np.ceil(alpha / self.quad_step)))
        nodes, weights = np.polynomial.legendre.leggauss(3)
        edges = np.linspace(0.0, alpha, panels + 1)
        total = np.zeros(len(pts))
        y = pts
        previous = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            for node, w in zip(nodes, weights):
                s = a + half * (node + 1.0)
                y = backend.flow(y, -(s - previous))
                previous = s
                total += half * w * self._potential_values(y)
        return total

    def evaluate(self, backend: ModelBackend, x: Any, alpha: float) -> np.ndarray:
        pts, single = as_points(x, backend.dim)
        if self.kind == "constant":
            if backend.is_map:
                check_map_time(alpha)
            out = np.full(len(pts), self.constant**alpha)
        elif self.kind == "horocycle":
            out = np.asarray(backend.horocycle_weight(pts, alpha), dtype=float)
        else:
            if self.potential is None:
                raise InvalidParameterError("Potential weight needs a potential function")
            if alpha >= 0:
                out = np.exp(self._log_weight_forward(backend, pts, alpha))
            else:
                # phi_-a(y) = 1 / phi_a(g_a y)
                forward = backend.flow(pts, -alpha)
                out = np.exp(-self._log_weight_forward(backend, forward, -alpha))
        return out[0] if single else out


def weight_cocycle(
    backend: ModelBackend, weight: WeightSpec, alpha: float, grid: int = 64
) -> np.ndarray:
    """phi_alpha on the uniform grid of the base torus, shape (grid, grid)."""
    if grid < 2:
        raise InvalidParameterError(f"Weight grid needs at least 2 points, got {grid}")
    axis = np.arange(grid) / grid
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    if backend.dim == 3:
        pts = np.concatenate([pts, np.zeros((len(pts), 1))], axis=1)
    values = np.asarray(weight.evaluate(backend, pts, alpha), dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise InvalidParameterError(
            f"Weight phi_{alpha} is not positive and finite on the grid", stage="weight"
        )
    return values.reshape(grid, grid)


def cocycle_defect(
    weight: WeightSpec, backend: ModelBackend, x: Any, alpha: float, beta: float
) -> float:
    """max |phi_(a+b) - phi_a (phi_b o g_-a)| / phi_(a+b) over the points."""
    pts, _ = as_points(x, backend.dim)
    joint = weight.evaluate(backend, pts, alpha + beta)
    split = weight.evaluate(backend, pts, alpha) * weight.evaluate(
        backend, backend.flow(pts, -alpha), beta
    )
    return float(np.max(np.abs(joint - split) / np.abs(joint)))


def recovered_potential(
    weight: WeightSpec, backend: ModelBackend, x: Any, step: float = 1e-3
) -> np.ndarray:
    """d/dalpha phi_alpha at 0+ (one step of log phi for maps)."""
    if backend.is_map:
        return np.log(weight.evaluate(backend, x, 1))
    return (weight.evaluate(backend, x, step) - 1.0) / step


class TransferMatrix(BaseModel):
    """Fourier-Galerkin truncation <e_m, L_alpha e_k> over |k|_inf <= K."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: Any = Field(..., description="Dense ndarray or scipy.sparse CSR matrix.")
    K: int
    alpha: float
    dim: int = 2
    grid: Optional[int] = None
    prune_threshold: float = PRUNE_THRESHOLD
    backend_kind: str = ""
    weight_kind: str = ""

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    @property
    def modes(self) -> np.ndarray:
        return mode_list(self.K, self.dim)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def apply(self, vec: Any) -> np.ndarray:
        return self.matrix @ np.asarray(vec, dtype=complex)

    def row(self, k: Any) -> np.ndarray:
        i = int(mode_index(k, self.K)[0])
        if i < 0:
            raise InvalidParameterError(f"Mode {k} lies outside the truncation K={self.K}")
        return np.asarray(self.matrix[i].toarray()).ravel() if self.is_sparse else self.matrix[i]


def _finalize(matrix: np.ndarray, prune: float):
    matrix[np.abs(matrix) < prune] = 0.0
    density = np.count_nonzero(matrix) / matrix.size
    if density < DENSE_FRACTION:
        return sp.csr_matrix(matrix)
    return matrix


def _lattice_transfer(backend: LinearCat, weight: WeightSpec, n: int, K: int) -> sp.csr_matrix:
    # e_k o A^-n = e_(A^-n k) since A is symmetric.
    c = float(np.asarray(weight.evaluate(backend, np.zeros(2), n)))
    modes = mode_list(K)
    images = np.asarray(modes, dtype=int).astype(object) @ backend.matrix_power(-n, exact=True).T
    inside = np.array([abs(a) <= K and abs(b) <= K for a, b in images], dtype=bool)
    rows = np.full(len(modes), -1, dtype=np.int64)
    if inside.any():
        rows[inside] = mode_index(images[inside].astype(np.int64), K)
    keep = rows >= 0
    cols = np.arange(len(modes))[keep]
    size = len(modes)
    return sp.csr_matrix(
        (np.full(keep.sum(), c, dtype=complex), (rows[keep], cols)), shape=(size, size)
    )


def aliasing_bound(K: int, n: int) -> int:
    """Smallest FFT grid resolving P L_n P: images of modes grow like lambda_u^n."""
    return int(np.ceil(4 * K * LAMBDA_U ** max(n - 1, 0)))


def _fft_transfer(
    backend: ModelBackend, weight: WeightSpec, n: int, K: int, grid: int, workers: int
) -> np.ndarray:
    """Columns of P L_n P from FFTs of the weighted modes pulled back by g_-n."""
    width = 2 * K + 1
    axis = np.arange(grid) / grid
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    pulled = backend.flow(pts, -n)
    w = np.asarray(weight.evaluate(backend, pts, n), dtype=float)
    k_axis = np.arange(-K, K + 1)
    rows = np.mod(mode_list(K), grid)
    chunk = int(max(1, min(width, FFT_CHUNK_BYTES // (16 * grid**2))))
    matrix = np.empty((width**2, width**2), dtype=complex)
    for a in range(width):
        first = np.exp(TWO_PI * 1j * k_axis[a] * pulled[:, 0]) * w
        for start in range(0, width, chunk):
            ks = k_axis[start : start + chunk]
            block = np.exp(TWO_PI * 1j * np.outer(ks, pulled[:, 1])) * first
            block = block.reshape(len(ks), grid, grid)
            coefficients = scipy.fft.fft2(block, axes=(1, 2), workers=workers) / grid**2
            columns = a * width + start + np.arange(len(ks))
            matrix[:, columns] = coefficients[:, rows[:, 0], rows[:, 1]].T
    return matrix


def assemble_transfer(
    backend: ModelBackend,
    weight: WeightSpec,
    alpha: float,
    K: int,
    grid: Optional[int] = None,
    workers: int = 1,
    cache: Optional[FieldCache] = None,
    prune: float = PRUNE_THRESHOLD,
) -> TransferMatrix:
    """
    Truncated matrix of L_alpha on the torus Fourier basis.
    The linear cat map with a constant cocycle is assembled on the exact lattice action;
    otherwise column k holds the Fourier coefficients of phi_n (e_k o g_-n) on a grid that
    grows with lambda_u^n, so time-n matrices are P L_n P and not powers of P L_1 P.
    """
    if K < 4:
        raise InvalidParameterError(f"Truncation K must be >= 4, got {K}")
    if backend.dim != 2:
        raise InvalidParameterError(
            "Flow backends are discretized with fibre_family, not assemble_transfer"
        )
    n = check_map_time(alpha)
    if n < 0:
        raise InvalidTimeError(f"Transfer matrices are assembled for alpha >= 0, got {alpha}")
    exact = isinstance(backend, LinearCat) and weight.kind in ("constant", "horocycle")
    G: Optional[int] = None
    if not exact:
        bound = aliasing_bound(K, n)
        G = grid if grid is not None else scipy.fft.next_fast_len(int(np.ceil(1.25 * bound)))
        if G < bound:
            raise ResolutionError(
                f"Grid {G} is below the anti-aliasing bound {bound} for alpha={n}"
            )

    key = ("transfer", getattr(backend, "key", backend.kind), weight.key, n, K, G)
    if cache is not None:
        cached = cache.get(key)
        if cached is not None:
            return cached

    started = time.perf_counter()
    size = (2 * K + 1) ** 2
    if exact:
        matrix: Any = _lattice_transfer(backend, weight, n, K)
    elif n == 0:
        matrix = sp.identity(size, dtype=complex, format="csr")
    elif G is not None:
        matrix = _finalize(_fft_transfer(backend, weight, n, K, G, workers), prune)
    logger.info(
        f"Assembled transfer matrix K={K} grid={G} columns={size} alpha={n} "
        f"sparse={sp.issparse(matrix)} seconds={time.perf_counter() - started:.3f}"
    )
    result = TransferMatrix(
        matrix=matrix,
        K=K,
        alpha=float(n),
        grid=G,
        prune_threshold=prune,
        backend_kind=backend.kind,
        weight_kind=weight.kind,
    )
    if cache is not None:
        cache.set(key, result)
    return result


def _apply_base(M: Any, F: np.ndarray) -> np.ndarray:
    """Apply the base matrix along axis 1 of a fibre state (q, n, ...)."""
    moved = np.moveaxis(F, 1, 0)
    shape = moved.shape
    out = M @ moved.reshape(shape[0], -1)
    return np.moveaxis(np.asarray(out).reshape(shape), 0, 1)


class FibreFamily:
    """
    Time-alpha semigroup of the unit-roof mapping torus over a time-one matrix M:
    (L_alpha F)(u) = e^(c (alpha - m)) M^m F(v), v = u + m - alpha in [0, 1), m = ceil(alpha - u)+.

    States are arrays (q, n, ...) of base coefficient vectors at Chebyshev nodes u_j in [0, 1].
    """

    def __init__(self, step: TransferMatrix, rate: float, nodes: int = 20):
        if nodes < 4:
            raise InvalidParameterError(f"Fibre family needs at least 4 nodes, got {nodes}")
        self.step = step
        self.M = step.matrix
        self.rate = float(rate)
        self.size = step.size
        self.nodes = 0.5 * (1.0 - np.cos(np.pi * np.arange(nodes) / (nodes - 1)))
        self._interp = BarycentricInterpolator(self.nodes, np.eye(nodes))
        gl_nodes, gl_weights = np.polynomial.legendre.leggauss(64)
        self._quad_u = 0.5 * (gl_nodes + 1.0)
        self._quad_w = 0.5 * gl_weights
        self._quad_interp = self.interpolation(self._quad_u)
        self._growth: Optional[float] = None

    @property
    def q(self) -> int:
        return len(self.nodes)

    def interpolation(self, v: Any) -> np.ndarray:
        """Matrix of Lagrange basis values l_j(v), shape (len(v), q)."""
        return np.atleast_2d(self._interp(np.asarray(v, dtype=float)))

    def state(self, profile: Callable[[np.ndarray], np.ndarray], vector: Any) -> np.ndarray:
        """F(u) = profile(u) * vector."""
        vector = np.asarray(vector, dtype=complex)
        return profile(self.nodes)[:, None] * vector[None, :]

    def exponential_state(self, vector: Any, kappa: float) -> np.ndarray:
        return self.state(lambda u: np.exp(kappa * u), vector)

    def evaluate(self, F: np.ndarray, u: Any) -> np.ndarray:
        return np.einsum("ij,j...->i...", self.interpolation(u), F)

    def norm(self, F: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
        """sqrt(int_0^1 sum_k W(k) |F_k(u)|^2 du); the fibre regularity is not weighted."""
        values = np.einsum("ij,j...->i...", self._quad_interp, F)
        w = np.ones(self.size) if weights is None else np.asarray(weights, dtype=float)
        w = w.reshape((1, -1) + (1,) * (F.ndim - 2))
        density = np.sum(w * np.abs(values) ** 2, axis=1)
        weights = self._quad_w.reshape((-1,) + (1,) * (density.ndim - 1))
        return float(np.sqrt(np.sum(weights * density)))

    def _split(self, alpha: float):
        m = np.maximum(np.ceil(alpha - self.nodes - 1e-15), 0).astype(int)
        v = self.nodes + m - alpha
        return m, np.clip(v, 0.0, 1.0)

    def apply(self, F: np.ndarray, alpha: float) -> np.ndarray:
        return self.apply_many(F, [alpha])[0]

    def apply_many(self, F: np.ndarray, alphas: Sequence[float]) -> List[np.ndarray]:
        alphas = [float(a) for a in alphas]
        if any(a < 0 for a in alphas):
            raise InvalidTimeError("The fibre semigroup is only defined for alpha >= 0")
        F = np.asarray(F, dtype=complex)
        m_max = int(max(np.max(self._split(a)[0]) for a in alphas)) if alphas else 0
        powers = [F]
        for _ in range(m_max):
            powers.append(_apply_base(self.M, powers[-1]))
        out = []
        for alpha in alphas:
            m, v = self._split(alpha)
            L = self.interpolation(v)
            result = np.empty_like(F)
            for i in range(self.q):
                result[i] = np.exp(self.rate * (alpha - m[i])) * np.tensordot(
                    L[i], powers[m[i]], axes=(0, 0)
                )
            out.append(result)
        return out

    def growth_bound(self, samples: Optional[Sequence[np.ndarray]] = None, headroom: float = 0.1):
        """Max of log ||L_1 F|| / ||F|| over the samples, plus relative headroom."""
        default = samples is None
        if default and self._growth is not None:
            return self._growth
        if default:
            rng = np.random.default_rng(0)
            samples = [
                rng.normal(size=(self.q, self.size)) + 1j * rng.normal(size=(self.q, self.size))
                for _ in range(6)
            ]
            samples.append(self.exponential_state(np.eye(self.size)[self.size // 2], 0.0))
        rates = []
        for F in samples:
            norm = self.norm(F)
            if norm > 0:
                image = self.norm(self.apply(F, 1.0))
                rates.append(np.log(max(image, 1e-300) / norm))
        measured = float(max(rates))
        bound = measured + headroom * max(abs(measured), 1e-3)
        if default:
            self._growth = bound
        logger.debug(f"Fibre family growth bound A0={bound:.6f} (measured {measured:.6f})")
        return bound

    def resolvent_apply(
        self,
        F: np.ndarray,
        z: complex,
        n: int = 1,
        method: Literal["fibre", "laguerre"] = "fibre",
        growth_bound: Optional[float] = None,
    ) -> np.ndarray:
        """R_z^n F = int_0^inf alpha^(n-1) e^(-z alpha) / (n-1)! L_alpha F dalpha."""
        if n < 1:
            raise InvalidParameterError(f"Resolvent power must be >= 1, got {n}")
        A0 = self.growth_bound() if growth_bound is None else growth_bound
        beta = float(np.real(z)) - A0
        if beta <= 0:
            raise DivergentIntegralError(
                f"Re z = {np.real(z):.6g} does not exceed the growth bound A0 = {A0:.6g}",
                stage="resolvent",
            )
        F = np.asarray(F, dtype=complex)
        if method == "laguerre":
            return self._resolvent_laguerre(F, complex(z), n, beta)
        if method != "fibre":
            raise InvalidParameterError(f"Unknown resolvent method {method!r}")
        return self._resolvent_fibre(F, complex(z), n, beta)

    def _kernel(self, alpha: np.ndarray, m: int, z: complex, n: int) -> np.ndarray:
        log_k = (n - 1) * np.log(alpha) - z * alpha + self.rate * (alpha - m) - gammaln(n)
        return np.exp(log_k)

    def _resolvent_fibre(self, F: np.ndarray, z: complex, n: int, beta: float) -> np.ndarray:
        horizon = gammaincinv(n, 1.0 - TAIL_TOL) / beta
        m_max = int(np.ceil(horizon)) + 1
        Q = 64 + int(np.ceil(0.75 * abs(z.imag)))
        x, w = np.polynomial.legendre.leggauss(Q)
        v_full = 0.5 * (x + 1.0)
        w_full = 0.5 * w
        L_full = self.interpolation(v_full) * w_full[:, None]

        # m = 0: alpha = u - v with v in [0, u].
        C0 = np.zeros((self.q, self.q), dtype=complex)
        for i, u in enumerate(self.nodes):
            if u <= 0:
                continue
            v = u * v_full
            C0[i] = (self._kernel(u - v, 0, z, n) * w_full * u) @ self.interpolation(v)

        def crossing_kernel(m: int) -> np.ndarray:
            alpha = self.nodes[:, None] + m - v_full[None, :]
            return self._kernel(alpha, m, z, n) @ L_full

        S = np.einsum("ij,j...->i...", crossing_kernel(m_max), F)
        for m in range(m_max - 1, 0, -1):
            S = _apply_base(self.M, S) + np.einsum("ij,j...->i...", crossing_kernel(m), F)
        S = _apply_base(self.M, S) + np.einsum("ij,j...->i...", C0, F)
        logger.debug(f"Fibre resolvent z={z} n={n} crossings={m_max} nodes={Q}")
        return S

    def _resolvent_laguerre(self, F: np.ndarray, z: complex, n: int, beta: float) -> np.ndarray:
        x, w = roots_genlaguerre(LAGUERRE_NODES, n - 1)
        alphas = x / beta
        factors = w * np.exp(x * (1.0 - z / beta) - gammaln(n) - n * np.log(beta))
        images = self.apply_many(F, alphas)
        total = np.zeros_like(F)
        for factor, image in zip(factors, images):
            total += factor * image
        return total

    def eigen_rate(self, mu: complex) -> complex:
        """Fibre exponent kappa with e^(kappa u) v an eigenfunction when M v = mu v."""
        return self.rate - np.log(mu)


def fibre_family(
    backend: ModelBackend,
    weight: WeightSpec,
    K: int,
    nodes: int = 20,
    rate: Optional[float] = None,
    grid: Optional[int] = None,
    workers: int = 1,
    cache: Optional[FieldCache] = None,
) -> FibreFamily:
    """
    Continuous-time transfer family used by resolvents.
    Map backends are suspended under the unit roof; the constant-roof suspension reduces to
    its base map with the per-crossing horocycle weight.
    """
    if isinstance(backend, Suspension):
        if backend.epsilon2 != 0.0:
            raise InvalidParameterError(
                "Resolvents are implemented for the unit-roof suspension only"
            )
        base = LinearCat(smoothness=backend.smoothness, cache=cache)
        step = assemble_transfer(base, weight, 1, K, grid=grid, workers=workers, cache=cache)
    else:
        step = assemble_transfer(backend, weight, 1, K, grid=grid, workers=workers, cache=cache)
    if rate is None:
        rate = natural_rate(weight)
    return FibreFamily(step, rate, nodes)


def natural_rate(weight: WeightSpec) -> float:
    """Fibre rate matching the per-step weight (log lambda_u for the horocycle weight)."""
    if weight.kind == "horocycle":
        return float(np.log(LAMBDA_U))
    if weight.kind == "constant":
        return float(np.log(weight.constant))
    return 0.0


def resolvent_identity_defect(
    family: FibreFamily,
    z: complex,
    w: complex,
    samples: Sequence[np.ndarray],
    method: Literal["fibre", "laguerre"] = "fibre",
) -> float:
    """max ||R_z F - R_w F - (w - z) R_z R_w F|| / ||F|| over the samples."""
    worst = 0.0
    for F in samples:
        Rz = family.resolvent_apply(F, z, method=method)
        Rw = family.resolvent_apply(F, w, method=method)
        RzRw = family.resolvent_apply(Rw, z, method=method)
        defect = family.norm(Rz - Rw - (w - z) * RzRw) / family.norm(F)
        worst = max(worst, defect)
    return worst


def transfer_norms(
    matrix: TransferMatrix, vectors: Sequence[np.ndarray], weights: Optional[np.ndarray] = None
) -> Dict[str, List[float]]:
    """Weighted l2 norms of vectors and of their images."""
    w = np.ones(matrix.size) if weights is None else weights
    before = [float(np.sqrt(np.sum(w * np.abs(v) ** 2))) for v in vectors]
    after = [float(np.sqrt(np.sum(w * np.abs(matrix.apply(v)) ** 2))) for v in vectors]
    return {"before": before, "after": after}
