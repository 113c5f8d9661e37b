from __future__ import annotations

import struct
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import comb

from anisores.config import ConeConfig, IndexConfig, PartitionConfig
from anisores.exceptions import (
    GeometryError,
    InvalidParameterError,
    PreconditionError,
    ResolutionError,
    SingularDifferentialError,
)
from anisores.logging import get_logger
from anisores.models import (
    ArrowPair,
    ArrowReport,
    ConeCertificate,
    ConeExpansionReport,
    ConeInclusionReport,
)

logger = get_logger("anisores.spectral_blocks")

SIGMAS: Tuple[str, str, str] = ("-", "+", "0")
BLOCKFIELD_MAGIC = b"ABLK"
BLOCKFIELD_VERSION = 1


def smoothstep_polynomial(x: np.ndarray, order: int) -> np.ndarray:
    """C^order polynomial step on [0, 1] (0 below, 1 above)."""
    x = np.clip(x, 0.0, 1.0)
    total = np.zeros_like(x, dtype=float)
    for n in range(order + 1):
        total += comb(order + n, n, exact=True) * comb(2 * order + 1, order - n, exact=True) * (
            (-x) ** n
        )
    return x ** (order + 1) * total


def smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        g = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
        out = f / (f + g)
    return np.where(u <= 0, 0.0, np.where(u >= 1, 1.0, out))


class AnisotropicIndex(BaseModel):
    """Regularity exponents c(-) = s, c(+) = t, c(0) = q and the outer exponent p."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    s: float
    t: float
    q: float
    p: float = Field(default=2.0, gt=1.0)

    def exponent(self, sigma: str) -> float:
        return {"-": self.s, "+": self.t, "0": self.q}[sigma]

    @property
    def exponents(self) -> Tuple[float, float, float]:
        return (self.s, self.t, self.q)

    @classmethod
    def from_config(cls, config: IndexConfig, weak: bool = False) -> AnisotropicIndex:
        if weak:
            return cls(s=config.s_weak, t=config.t_weak, q=config.q_weak, p=config.p)
        return cls(s=config.s, t=config.t, q=config.q, p=config.p)


def check_lasota_yorke_indices(strong: AnisotropicIndex, weak: AnisotropicIndex) -> None:
    """s' < s < 0 < q <= t, q - 1 <= q' < q, t' < t."""
    problems = []
    if not weak.s < strong.s < 0:
        problems.append("s' < s < 0")
    if not 0 < strong.q <= strong.t:
        problems.append("0 < q <= t")
    if not strong.q - 1 <= weak.q < strong.q:
        problems.append("q - 1 <= q' < q")
    if not weak.t < strong.t:
        problems.append("t' < t")
    if problems:
        raise InvalidParameterError(
            "Index violates the Lasota-Yorke ordering: " + ", ".join(problems)
        )


class DyadicPartition(BaseModel):
    """Paley-Littlewood partition Psi_0, ..., Psi_N built from a polynomial profile chi."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    chi_order: int = 3
    norm: Literal["euclidean", "l4"] = "euclidean"
    max_level: int = 7

    def chi(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return 1.0 - smoothstep_polynomial(u - 1.0, self.chi_order)

    def frequency_norm(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.norm == "l4":
            return np.sum(xi**4, axis=-1) ** 0.25
        return np.sqrt(np.sum(xi**2, axis=-1))

    def psi(self, n: int, xi: np.ndarray) -> np.ndarray:
        r = self.frequency_norm(xi)
        if n == 0:
            return self.chi(r)
        return self.chi(2.0 ** (-n) * r) - self.chi(2.0 ** (1 - n) * r)

    def psi_all(self, xi: np.ndarray) -> np.ndarray:
        """Stack of Psi_0..Psi_N, shape (N + 1, ...)."""
        r = self.frequency_norm(xi)
        chis = [self.chi(2.0 ** (-n) * r) for n in range(self.max_level + 1)]
        out = [chis[0]] + [chis[n] - chis[n - 1] for n in range(1, self.max_level + 1)]
        return np.stack(out)


def build_partition(chi_order: int = 3, norm_choice: str = "euclidean", max_level: int = 7):
    if max_level < 1:
        raise InvalidParameterError(f"max_level must be >= 1, got {max_level}")
    if chi_order < 2:
        raise InvalidParameterError(f"chi_order must be >= 2, got {chi_order}")
    if norm_choice not in ("euclidean", "l4"):
        raise InvalidParameterError(f"Unknown frequency norm {norm_choice!r}")
    return DyadicPartition(chi_order=chi_order, norm=norm_choice, max_level=max_level)


def partition_from_config(config: PartitionConfig) -> DyadicPartition:
    return build_partition(config.chi_order, config.norm, config.max_level)


class Cone(BaseModel):
    """Closed double cone of covectors within `aperture` (radians) of the axis line."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    axis: Tuple[float, ...]
    aperture: float = Field(..., gt=0.0, lt=np.pi / 2)

    @classmethod
    def from_angle(cls, angle_deg: float, aperture_deg: float) -> Cone:
        theta = np.deg2rad(angle_deg)
        axis = (float(np.cos(theta)), float(np.sin(theta)))
        return cls(axis=axis, aperture=np.deg2rad(aperture_deg))

    @property
    def unit_axis(self) -> np.ndarray:
        a = np.asarray(self.axis, dtype=float)
        return a / np.linalg.norm(a)

    @property
    def dim(self) -> int:
        return len(self.axis)

    def angle_to(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        norms = np.linalg.norm(xi, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.abs(xi @ self.unit_axis) / norms
        return np.arccos(np.clip(np.nan_to_num(cos, nan=0.0), 0.0, 1.0))

    def contains(self, xi: np.ndarray) -> np.ndarray:
        return self.angle_to(xi) <= self.aperture


class ConeEnsemble(BaseModel):
    """
    Angular partition of unity (Phi_-, Phi_+, Phi_0) around two transversal cones.
    Phi_+- = 1 on the cone and 0 beyond aperture + width; the companion functions
    Phi~ are identically 1 on supp Phi with strictly larger support.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    minus: Cone
    plus: Cone
    width: float

    @property
    def dim(self) -> int:
        return self.minus.dim

    def _cone(self, sigma: str) -> Cone:
        return self.minus if sigma == "-" else self.plus

    def _zero_floor(self, cone: Cone) -> float:
        return max(cone.aperture - 0.5 * self.width, 0.5 * cone.aperture)

    def phi(self, sigma: str, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        zero = np.linalg.norm(xi, axis=-1) == 0
        if sigma == "0":
            value = 1.0 - self.phi("-", xi) - self.phi("+", xi)
            return np.where(zero, 1.0, value)
        cone = self._cone(sigma)
        value = 1.0 - smooth_step((cone.angle_to(xi) - cone.aperture) / self.width)
        return np.where(zero, 0.0, value)

    def phi_all(self, xi: np.ndarray) -> np.ndarray:
        minus = self.phi("-", xi)
        plus = self.phi("+", xi)
        zero = np.linalg.norm(np.asarray(xi, dtype=float), axis=-1) == 0
        neutral = np.where(zero, 1.0, 1.0 - minus - plus)
        return np.stack([minus, plus, neutral])

    def companion(self, sigma: str, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if sigma == "0":
            out = np.ones(np.shape(xi)[:-1])
            for cone in (self.minus, self.plus):
                floor = self._zero_floor(cone)
                out = out * smooth_step((cone.angle_to(xi) - floor) / (cone.aperture - floor))
            return out
        cone = self._cone(sigma)
        excess = cone.angle_to(xi) - cone.aperture - self.width
        return 1.0 - smooth_step(excess / (0.5 * self.width))

    def support(self, sigma: str, xi: np.ndarray) -> np.ndarray:
        """Closed support of Phi_sigma (boolean)."""
        if sigma == "0":
            return (self.minus.angle_to(xi) >= self.minus.aperture) & (
                self.plus.angle_to(xi) >= self.plus.aperture
            )
        cone = self._cone(sigma)
        return cone.angle_to(xi) <= cone.aperture + self.width

    def companion_support(self, sigma: str, xi: np.ndarray) -> np.ndarray:
        """Closed support of the companion Phi~_sigma (boolean)."""
        if sigma == "0":
            return (self.minus.angle_to(xi) >= self._zero_floor(self.minus)) & (
                self.plus.angle_to(xi) >= self._zero_floor(self.plus)
            )
        cone = self._cone(sigma)
        return cone.angle_to(xi) <= cone.aperture + 1.5 * self.width

    def companion_reach(self, sigma: str) -> float:
        return self._cone(sigma).aperture + 1.5 * self.width


def build_cone_ensemble(cone_minus: Cone, cone_plus: Cone, transition_width: float) -> ConeEnsemble:
    """transition_width in radians."""
    if cone_minus.dim != cone_plus.dim:
        raise GeometryError("Cones live in different dimensions", invariant="dimension")
    gap = float(
        np.arccos(np.clip(abs(cone_minus.unit_axis @ cone_plus.unit_axis), 0.0, 1.0))
    )
    apertures = cone_minus.aperture + cone_plus.aperture
    if gap <= apertures:
        raise GeometryError(
            f"Cones overlap: axis gap {np.rad2deg(gap):.3f} deg <= apertures "
            f"{np.rad2deg(apertures):.3f} deg",
            invariant="transversality",
        )
    if transition_width <= 0 or gap <= apertures + 3.0 * transition_width:
        raise GeometryError(
            f"Transition width {np.rad2deg(transition_width):.3f} deg leaves smoothed supports "
            "intersecting the opposite cone",
            invariant="transition_width",
        )
    for cone in (cone_minus, cone_plus):
        if cone.aperture + 1.5 * transition_width >= np.pi / 2:
            raise GeometryError(
                "Companion support wraps past the normal line", invariant="aperture"
            )
    return ConeEnsemble(minus=cone_minus, plus=cone_plus, width=transition_width)


def ensemble_from_config(config: ConeConfig) -> ConeEnsemble:
    from anisores.backends import STABLE_VECTOR, UNSTABLE_VECTOR

    minus_axis = config.minus_axis
    if minus_axis is None:
        minus_axis = float(np.rad2deg(np.arctan2(STABLE_VECTOR[1], STABLE_VECTOR[0])))
    plus_axis = config.plus_axis
    if plus_axis is None:
        plus_axis = float(np.rad2deg(np.arctan2(UNSTABLE_VECTOR[1], UNSTABLE_VECTOR[0])))
    return build_cone_ensemble(
        Cone.from_angle(minus_axis, config.minus_aperture),
        Cone.from_angle(plus_axis, config.plus_aperture),
        np.deg2rad(config.transition_width),
    )


def block_weights(partition: DyadicPartition, ensemble: ConeEnsemble, k: np.ndarray) -> np.ndarray:
    """Psi_{sigma,n}(k) = Phi_sigma(k) Psi_n(k), shape (3, N + 1, ...)."""
    return ensemble.phi_all(k)[:, None] * partition.psi_all(k)[None, :]


def mode_weights(
    partition: DyadicPartition,
    ensemble: ConeEnsemble,
    index: AnisotropicIndex,
    modes: np.ndarray,
) -> np.ndarray:
    """W(k) = sum 4^(c(sigma) n) Psi_{sigma,n}(k)^2: the p = 2 norm is sum |c_k|^2 W(k)."""
    weights = block_weights(partition, ensemble, np.asarray(modes, dtype=float))
    levels = np.arange(partition.max_level + 1)
    scale = np.stack([4.0 ** (index.exponent(sigma) * levels) for sigma in SIGMAS])
    scale = scale.reshape(scale.shape + (1,) * (weights.ndim - 2))
    return np.sum(scale * weights**2, axis=(0, 1))


def lattice(grid: int, dim: int) -> np.ndarray:
    """Integer frequencies of an FFT grid, shape (grid, ..., grid, dim)."""
    freqs = scipy.fft.fftfreq(grid, d=1.0 / grid)
    return np.stack(np.meshgrid(*([freqs] * dim), indexing="ij"), axis=-1)


def _check_grid(shape: Sequence[int]) -> int:
    sizes = set(shape)
    if len(sizes) != 1:
        raise ResolutionError(f"Grid must be square, got shape {tuple(shape)}")
    grid = sizes.pop()
    if grid < 2 or grid & (grid - 1):
        raise ResolutionError(f"Grid size {grid} is not a power of two")
    return grid


class BlockField(BaseModel):
    """Fourier coefficients of an observable split into (sigma, n) cone-dyadic blocks."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    coefficients: np.ndarray = Field(..., description="Shape (3, N + 1, grid, ..., grid).")
    grid: int
    dim: int
    partition: DyadicPartition
    ensemble: ConeEnsemble
    workers: int = 1

    def spatial(self, sigma: str, n: int) -> np.ndarray:
        block = self.coefficients[SIGMAS.index(sigma), n]
        return scipy.fft.ifftn(block * self.grid**self.dim, workers=self.workers)

    def spatial_all(self) -> np.ndarray:
        axes = tuple(range(2, 2 + self.dim))
        return scipy.fft.ifftn(
            self.coefficients * self.grid**self.dim, axes=axes, workers=self.workers
        )

    def reconstruct(self) -> np.ndarray:
        total = np.sum(self.coefficients, axis=(0, 1))
        return scipy.fft.ifftn(total * self.grid**self.dim, workers=self.workers)

    def to_bytes(self, index: AnisotropicIndex) -> bytes:
        header = BLOCKFIELD_MAGIC + struct.pack(
            "<4i4d",
            BLOCKFIELD_VERSION,
            self.dim,
            self.grid,
            self.partition.max_level,
            index.s,
            index.t,
            index.q,
            index.p,
        )
        body = np.ascontiguousarray(self.coefficients, dtype="<c16").tobytes()
        return header + body

    @classmethod
    def from_bytes(
        cls, data: bytes, partition: DyadicPartition, ensemble: ConeEnsemble
    ) -> Tuple[BlockField, AnisotropicIndex]:
        if data[:4] != BLOCKFIELD_MAGIC:
            raise ValueError("Not a block field payload")
        offset = 4 + struct.calcsize("<4i4d")
        version, dim, grid, cap, s, t, q, p = struct.unpack("<4i4d", data[4:offset])
        if version != BLOCKFIELD_VERSION:
            raise ValueError(f"Unsupported block field version {version}")
        if cap != partition.max_level:
            raise ValueError(f"Payload cap {cap} does not match partition cap")
        shape = (3, cap + 1) + (grid,) * dim
        coefficients = np.frombuffer(data[offset:], dtype="<c16").reshape(shape).copy()
        field = cls(
            coefficients=coefficients, grid=grid, dim=dim, partition=partition, ensemble=ensemble
        )
        return field, AnisotropicIndex(s=s, t=t, q=q, p=p)


def block_apply(
    partition: DyadicPartition,
    ensemble: ConeEnsemble,
    index: Optional[AnisotropicIndex],
    phi: np.ndarray,
    workers: int = 1,
) -> BlockField:
    """All blocks Psi^Op_{sigma,n} phi of a gridded observable on the unit torus."""
    phi = np.asarray(phi)
    grid = _check_grid(phi.shape)
    dim = phi.ndim
    if dim != ensemble.dim:
        raise ResolutionError(f"Observable is {dim}-dimensional, ensemble is {ensemble.dim}")
    coefficients = scipy.fft.fftn(phi, workers=workers) / grid**dim
    weights = block_weights(partition, ensemble, lattice(grid, dim))
    logger.debug(
        f"block_apply grid={grid} dim={dim} levels={partition.max_level + 1} workers={workers}"
    )
    return BlockField(
        coefficients=weights * coefficients[None, None],
        grid=grid,
        dim=dim,
        partition=partition,
        ensemble=ensemble,
        workers=workers,
    )


def local_norm(
    blockfield: BlockField, index: AnisotropicIndex, smoothness: Optional[float] = None
) -> float:
    """L_p norm over the grid of the pointwise l_2^c norm across blocks."""
    if smoothness is not None and max(abs(index.s), index.t, index.q) >= smoothness - 1:
        logger.warning(
            f"Index exponents {index.exponents} reach the smoothness budget r - 1 = "
            f"{smoothness - 1}; the norm is at its well-definedness boundary"
        )
    blocks = blockfield.spatial_all()
    levels = np.arange(blockfield.partition.max_level + 1)
    scale = np.stack([4.0 ** (index.exponent(sigma) * levels) for sigma in SIGMAS])
    scale = scale.reshape(scale.shape + (1,) * blockfield.dim)
    pointwise = np.sqrt(np.sum(scale * np.abs(blocks) ** 2, axis=(0, 1)))
    return float(np.mean(pointwise**index.p) ** (1.0 / index.p))


def kernel_l1_norms(
    partition: DyadicPartition,
    ensemble: ConeEnsemble,
    grid: int,
    levels: Optional[Sequence[int]] = None,
) -> Dict[str, List[float]]:
    """||F^-1 Psi_{sigma,n}||_{L_1} on the discrete torus, per cone and level."""
    _check_grid((grid,) * ensemble.dim)
    levels = list(levels) if levels is not None else list(range(partition.max_level + 1))
    weights = block_weights(partition, ensemble, lattice(grid, ensemble.dim))
    out: Dict[str, List[float]] = {}
    for i, sigma in enumerate(SIGMAS):
        norms = []
        for n in levels:
            kernel = scipy.fft.ifftn(weights[i, n] * grid**ensemble.dim)
            norms.append(float(np.mean(np.abs(kernel))))
        out[sigma] = norms
    return out


def sample_directions(dim: int, count: int = 3600) -> np.ndarray:
    """Unit representatives of lines through the origin."""
    if dim == 2:
        angles = np.linspace(0.0, np.pi, count, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    # Fibonacci points on the upper hemisphere.
    i = np.arange(count) + 0.5
    z = i / count
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    r = np.sqrt(1.0 - z**2)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def _boundary_rays(cone: Cone, reach: float) -> np.ndarray:
    if cone.dim != 2:
        return np.empty((0, cone.dim))
    base = np.arctan2(cone.unit_axis[1], cone.unit_axis[0])
    angles = np.array([base - reach, base + reach])
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def _as_differentials(F: Any) -> np.ndarray:
    D = np.asarray(F, dtype=float)
    if D.ndim == 2:
        D = D[None]
    dets = np.linalg.det(D)
    if np.any(np.abs(dets) < 1e-12):
        raise SingularDifferentialError("Differential sample is singular")
    return D


def cone_hyperbolicity_check(
    F: Any,
    inner: ConeEnsemble,
    ensemble: Optional[ConeEnsemble] = None,
    margin_tol: float = 1e-6,
    directions: int = 3600,
) -> ConeCertificate:
    """
    Check (DF)^tr supp Phi~o_- inside C^- and (DF)^tr supp Phi~o_0 outside supp Phi~_+
    at every differential sample; margins are angles in radians.
    """
    ensemble = ensemble or inner
    D = _as_differentials(F)
    rays = sample_directions(inner.dim, directions)

    minus_rays = np.concatenate(
        [rays, _boundary_rays(inner.minus, inner.companion_reach("-"))], axis=0
    )
    minus_rays = minus_rays[inner.companion_support("-", minus_rays)]
    images = _transpose_apply(D, minus_rays)
    margin_minus = float(ensemble.minus.aperture - np.max(ensemble.minus.angle_to(images)))

    zero_rays = rays[inner.companion_support("0", rays)]
    images = _transpose_apply(D, zero_rays)
    margin_zero = float(np.min(ensemble.plus.angle_to(images)) - ensemble.companion_reach("+"))

    holds = margin_minus >= margin_tol and margin_zero >= margin_tol
    logger.debug(
        f"Cone certificate holds={holds} margin_minus={margin_minus:.3e} "
        f"margin_zero={margin_zero:.3e} samples={len(D)}"
    )
    return ConeCertificate(
        holds=holds, margin_minus=margin_minus, margin_zero=margin_zero, samples=len(D)
    )


def torus_grid(grid: int, dim: int = 2) -> np.ndarray:
    axis = (np.arange(grid) + 0.5) / grid
    return np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)


def minimal_hyperbolic_step(
    backend: Any, ensemble: ConeEnsemble, grid: int = 16, max_step: int = 8
) -> Optional[int]:
    """Smallest integer alpha for which g_-alpha passes the cone certificate."""
    pts = torus_grid(grid, backend.dim)
    for step in range(1, max_step + 1):
        if cone_hyperbolicity_check(backend.differential(pts, -step), ensemble).holds:
            return step
    return None


def _transpose_apply(D: np.ndarray, rays: np.ndarray) -> np.ndarray:
    """(D_m)^tr eta_r for every sample m and ray r, shape (m, r, dim)."""
    return np.einsum("mij,ri->mrj", D, rays)


def _transpose_norm_over(D: np.ndarray, rays: np.ndarray) -> float:
    """sup |(D_m)^tr eta| over samples and unit rays."""
    if len(rays) == 0:
        return 0.0
    images = _transpose_apply(D, rays)
    return float(np.max(np.linalg.norm(images, axis=-1)))


def arrow_partition(
    F: Any,
    index: AnisotropicIndex,
    index_prime: AnisotropicIndex,
    ensemble: ConeEnsemble,
    inner: Optional[ConeEnsemble] = None,
    max_level: int = 7,
    directions: int = 3600,
) -> ArrowReport:
    """
    Admissible pairs (tau, l) -> (sigma, n) for differential samples DF on a region,
    with the geometric-sum bound of each (sigma, tau) combination.
    """
    inner = inner or ensemble
    D = _as_differentials(F)
    D_inv = np.linalg.inv(D)
    rays = sample_directions(ensemble.dim, directions)
    axes = np.stack([ensemble.minus.unit_axis, ensemble.plus.unit_axis])
    rays = np.concatenate([rays, axes], axis=0)

    norm_tau: Dict[str, float] = {}
    norm_sigma: Dict[str, float] = {}
    for sigma in SIGMAS:
        tau_rays = rays[inner.companion_support(sigma, rays)]
        norm_tau[sigma] = _transpose_norm_over(D, tau_rays)
        sigma_rays = rays[ensemble.support(sigma, rays)]
        # DF^-1 at F(x) is the inverse of DF at x.
        norm_sigma[sigma] = _transpose_norm_over(D_inv, sigma_rays)

    pairs: List[ArrowPair] = []
    bound: Dict[str, float] = {}
    measured: Dict[str, float] = {}
    implied: Dict[str, float] = {}
    levels = range(max_level + 1)
    for sigma in SIGMAS:
        for tau in SIGMAS:
            c = index.exponent(sigma)
            c_prime = index_prime.exponent(tau)
            if c > c_prime or norm_sigma[sigma] == 0 or norm_tau[tau] == 0:
                continue
            low = 2.0**-4 / norm_sigma[sigma]
            high = 2.0**4 * norm_tau[tau]
            worst = 0.0
            for ell in levels:
                total = 0.0
                for n in levels:
                    if low <= 2.0 ** (n - ell) <= high:
                        pairs.append(ArrowPair(tau=tau, ell=ell, sigma=sigma, n=n))
                        total += 2.0 ** (c_prime * (n - ell))
                worst = max(worst, total)
            key = f"{sigma},{tau}"
            if c_prime > 0:
                bound[key] = norm_tau[tau] ** c_prime
            elif c_prime < 0:
                bound[key] = norm_sigma[sigma] ** (-c_prime)
            else:
                bound[key] = 1.0
            measured[key] = worst
            implied[key] = worst / bound[key]
    return ArrowReport(
        pairs=pairs,
        norm_sigma=norm_sigma,
        norm_tau=norm_tau,
        bound=bound,
        measured_sum=measured,
        implied_constant=implied,
    )


def _dual_basis(backend: Any, x: np.ndarray) -> np.ndarray:
    duals = backend.dual_directions(x)
    columns = [duals["minus"], duals["plus"]]
    if "zero" in duals:
        columns.append(duals["zero"])
    return np.stack(columns, axis=-1)


def _cone_boundary(dim: int, gamma: float, samples: int) -> np.ndarray:
    """Coefficients (a, b, c) of covectors on the boundary of {|b| + |c| <= gamma |a|}, a = 1."""
    if dim == 2:
        return np.array([[1.0, gamma], [1.0, -gamma]])
    s = np.linspace(-1.0, 1.0, samples)
    b = gamma * s
    c = gamma * (1.0 - np.abs(s))
    upper = np.stack([np.ones_like(s), b, c], axis=-1)
    lower = np.stack([np.ones_like(s), b, -c], axis=-1)
    return np.concatenate([upper, lower], axis=0)


def _cone_interior(dim: int, gamma: float, samples: int) -> np.ndarray:
    if dim == 2:
        b = np.linspace(-gamma, gamma, samples)
        return np.stack([np.ones_like(b), b], axis=-1)
    parts = [np.array([[1.0, 0.0, 0.0]])]
    for scale in np.linspace(0.25, 1.0, 4):
        parts.append(_cone_boundary(3, gamma * scale, samples))
    return np.concatenate(parts, axis=0)


def _check_cone_precondition(
    backend: Any, alpha: float, gamma: float, gamma_prime: float, strict: bool
) -> Tuple[float, float]:
    C, theta = backend.anosov_constants()
    threshold = C**2 * theta**alpha * gamma
    violated = gamma_prime <= threshold if strict else gamma_prime < threshold * (1 - 1e-12)
    if violated:
        raise PreconditionError(
            f"gamma'={gamma_prime} does not exceed C^2 theta^alpha gamma = {threshold:.6g}"
        )
    return C, theta


def cone_inclusion_margin(
    backend: Any,
    x: Any,
    alpha: float,
    gamma: float,
    gamma_prime: float,
    samples: int = 64,
) -> ConeInclusionReport:
    """(Dg_-alpha)^tr C^-_gamma(x) inside C^-_gamma'(g_alpha x), and the (+) analogue."""
    if alpha <= 0:
        raise PreconditionError(f"alpha must be positive, got {alpha}")
    _check_cone_precondition(backend, alpha, gamma, gamma_prime, strict=True)
    x = np.asarray(x, dtype=float)
    dim = backend.dim
    coefficients = _cone_boundary(dim, gamma, samples)

    # (-) cone pushed to g_alpha x by ((D_x g_alpha)^-1)^tr.
    basis_x = _dual_basis(backend, x)
    forward = backend.flow(x, alpha)
    basis_fwd = _dual_basis(backend, forward)
    M = np.linalg.inv(backend.differential(x, alpha)).T
    images = (M @ (basis_x @ coefficients.T)).T
    decomposed = np.linalg.solve(basis_fwd, images.T).T
    ratios = np.sum(np.abs(decomposed[:, 1:]), axis=-1) / np.abs(decomposed[:, 0])
    margin_minus = float(gamma_prime - np.max(ratios))

    # (+) cone pulled to g_-alpha x by (D g_alpha at g_-alpha x)^tr.
    plus_coefficients = coefficients[:, [1, 0] + list(range(2, dim))]
    backward = backend.flow(x, -alpha)
    basis_bwd = _dual_basis(backend, backward)
    M_plus = backend.differential(backward, alpha).T
    images = (M_plus @ (basis_x @ plus_coefficients.T)).T
    decomposed = np.linalg.solve(basis_bwd, images.T).T
    others = np.abs(decomposed[:, 0]) + np.sum(np.abs(decomposed[:, 2:]), axis=-1)
    ratios = others / np.abs(decomposed[:, 1])
    margin_plus = float(gamma_prime - np.max(ratios))

    return ConeInclusionReport(
        holds=margin_minus > 0 and margin_plus > 0,
        margin_minus=margin_minus,
        margin_plus=margin_plus,
        alpha=alpha,
        gamma=gamma,
        gamma_prime=gamma_prime,
        samples=len(coefficients),
    )


def cone_expansion_bound(
    backend: Any,
    x: Any,
    alpha: float,
    gamma: float,
    gamma_prime: float,
    samples: int = 201,
) -> ConeExpansionReport:
    """Minimum of ||(Dg_-alpha)^tr v|| / ||v|| over v in C^-_gamma(x) against the cone bound."""
    if alpha < 0:
        raise PreconditionError(f"alpha must be non-negative, got {alpha}")
    if not gamma_prime < 1 and alpha > 0:
        raise PreconditionError(f"gamma' must be below 1, got {gamma_prime}")
    C, theta = _check_cone_precondition(backend, alpha, gamma, gamma_prime, strict=False)
    x = np.asarray(x, dtype=float)
    basis = _dual_basis(backend, x)
    covectors = (basis @ _cone_interior(backend.dim, gamma, samples).T).T
    M = np.linalg.inv(backend.differential(x, alpha)).T
    ratios = np.linalg.norm(covectors @ M.T, axis=-1) / np.linalg.norm(covectors, axis=-1)
    axis = basis[:, 0]
    axis_ratio = float(np.linalg.norm(M @ axis) / np.linalg.norm(axis))
    bound = C * (1 + gamma_prime) / (1 + gamma) * theta ** (-alpha)
    conservative = (1 - gamma_prime) / (C * (1 + gamma)) * theta ** (-alpha)
    min_ratio = float(np.min(ratios))
    return ConeExpansionReport(
        min_ratio=min_ratio,
        bound=float(bound),
        conservative_bound=float(conservative),
        axis_ratio=axis_ratio,
        holds=min_ratio >= bound * (1 - 1e-12),
        alpha=alpha,
        gamma=gamma,
        gamma_prime=gamma_prime,
    )
