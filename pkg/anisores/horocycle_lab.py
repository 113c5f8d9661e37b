from __future__ import annotations

from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial.chebyshev import chebpts1
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import brentq

from anisores.backends import LAMBDA_S, STABLE_VECTOR, LinearCat, ModelBackend, Suspension
from anisores.backends.base import as_points, line_angle, wrap_difference
from anisores.exceptions import (
    ConvergenceError,
    InvalidParameterError,
    QuadratureError,
    SearchError,
)
from anisores.logging import get_logger
from anisores.models import DualBoundReport, IdentityReport, RenormResult
from anisores.observables import FourierObservable
from anisores.spectral_blocks import (
    AnisotropicIndex,
    ConeEnsemble,
    DyadicPartition,
    mode_weights,
    smooth_step,
)

logger = get_logger("anisores.horocycle_lab")

LOW_ORDER = 16
HIGH_ORDER = 24
PROFILE_DEGREE = 24
LEAF_HORIZON = 50.0

Observable = Union[FourierObservable, Callable[[np.ndarray], np.ndarray]]


def _evaluate(phi: Observable, points: np.ndarray) -> np.ndarray:
    if hasattr(phi, "evaluate"):
        return np.asarray(phi.evaluate(points))
    return np.asarray(phi(points))


def orbit_panel(phi: Any) -> float:
    if isinstance(phi, FourierObservable):
        frequency = 2.0 * np.pi * np.sqrt(phi.dim) * phi.max_mode
        return float(min(0.5, 12.0 / (frequency + 1.0)))
    return 0.25


def orbit_points(backend: ModelBackend, x: Any, rhos: Any) -> np.ndarray:
    """h_rho(x) for an arbitrary array of rho, in the order given."""
    rhos = np.asarray(rhos, dtype=float)
    p = np.asarray(x, dtype=float)
    if isinstance(backend, LinearCat):
        return backend.horocycle_orbit(p, rhos)
    unique, inverse = np.unique(rhos, return_inverse=True)
    out = np.empty((len(unique), backend.dim))
    positive = unique >= 0
    if positive.any():
        out[positive] = backend.horocycle_orbit(p, unique[positive])
    if (~positive).any():
        out[~positive] = backend.horocycle_orbit(p, unique[~positive][::-1])[::-1]
    return out[inverse]


class HorocycleOrbit(BaseModel):
    """Samples h_rho(x) of the unit-speed stable flow."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    rhos: np.ndarray
    points: np.ndarray
    step: float = Field(1e-5, description="Finite-difference step for tangent checks.")

    def _tangents(self, backend: ModelBackend) -> np.ndarray:
        ahead = orbit_points(backend, self.x, self.rhos + self.step)
        behind = orbit_points(backend, self.x, self.rhos - self.step)
        d = ahead - behind
        d[:, :2] = wrap_difference(d[:, :2])
        return d / (2.0 * self.step)

    def tangency_defect(self, backend: ModelBackend) -> float:
        """Largest angle between the orbit tangent and the stable direction."""
        tangent = self._tangents(backend)
        e_minus, _ = backend.stable_direction(self.points)
        return float(np.max(line_angle(tangent, e_minus)))

    def speed_defect(self, backend: ModelBackend) -> float:
        tangent = self._tangents(backend)
        return float(np.max(np.abs(backend.speed(self.points, tangent) - 1.0)))


def horocycle_flow(backend: ModelBackend, x: Any, rho: float) -> np.ndarray:
    """h_rho(x); the constant-roof suspension raises NonMixingModelError."""
    return backend.horocycle(x, rho)


def horocycle_orbit(backend: ModelBackend, x: Any, rhos: Sequence[float]) -> HorocycleOrbit:
    rhos = np.asarray(rhos, dtype=float)
    return HorocycleOrbit(
        x=np.asarray(x, dtype=float), rhos=rhos, points=orbit_points(backend, x, rhos)
    )


def flow_law_defect(backend: ModelBackend, x: Any, rho1: Any, rho2: Any) -> float:
    """max distance between h_rho1(h_rho2 x) and h_(rho1 + rho2)(x) over the samples."""
    pts, _ = as_points(x, backend.dim)
    rho1 = np.broadcast_to(np.asarray(rho1, dtype=float), (len(pts),))
    rho2 = np.broadcast_to(np.asarray(rho2, dtype=float), (len(pts),))
    worst = 0.0
    for p, r1, r2 in zip(pts, rho1, rho2):
        composed = backend.horocycle(backend.horocycle(p, r2), r1)
        joint = backend.horocycle(p, r1 + r2)
        worst = max(worst, float(backend.torus_distance(composed, joint)))
    return worst


class RenormProfile:
    """
    rho -> tau(rho, alpha, x) on [lo, hi], integrating d/drho tau = ||Dg_alpha e_-(h_rho x)||
    along the orbit with piecewise Chebyshev interpolants. Exact for the linear cat map.
    """

    def __init__(
        self,
        backend: ModelBackend,
        x: Any,
        alpha: float,
        lo: float,
        hi: float,
        degree: int = PROFILE_DEGREE,
        panel: Optional[float] = None,
        max_panels: int = 4096,
    ):
        self.backend = backend
        self.x = np.asarray(x, dtype=float)
        self.alpha = float(alpha)
        self.lo = min(float(lo), 0.0)
        self.hi = max(float(hi), 0.0)
        self.error = 0.0
        if isinstance(backend, LinearCat):
            self._slope: Optional[float] = float(LAMBDA_S**self.alpha)
            return
        self._slope = None
        if panel is None:
            h = float(backend.topological_entropy())
            panel = 0.25 * min(1.0, float(np.exp(-h * max(0.0, -self.alpha))))
        panel = max(panel, (self.hi - self.lo) / max_panels)
        if self.hi == self.lo:
            self.hi = panel
        left = np.linspace(self.lo, 0.0, max(1, int(np.ceil(-self.lo / panel))) + 1)
        right = np.linspace(0.0, self.hi, max(1, int(np.ceil(self.hi / panel))) + 1)
        edges = np.concatenate([left[:-1], right]) if self.lo < 0 else right
        if self.hi == 0.0 and self.lo < 0:
            edges = left
        self.edges = edges
        nodes = 0.5 * (chebpts1(degree) + 1.0)
        a, b = edges[:-1], edges[1:]
        rhos = a[:, None] + (b - a)[:, None] * nodes[None, :]
        points = orbit_points(backend, self.x, rhos.ravel())
        rates = np.asarray(backend.stable_expansion(points, self.alpha), dtype=float)
        rates = rates.reshape(rhos.shape)
        self._rates = []
        self._antiderivatives = []
        totals = np.empty(len(a))
        for i in range(len(a)):
            fit = Chebyshev.fit(rhos[i], rates[i], degree - 1, domain=[a[i], b[i]])
            anti = fit.integ(lbnd=a[i])
            self._rates.append(fit)
            self._antiderivatives.append(anti)
            totals[i] = anti(b[i])
            self.error = max(self.error, abs(fit.coef[-1]) * (b[i] - a[i]))
        start = int(np.searchsorted(edges, 0.0))
        offsets = np.zeros(len(edges))
        offsets[start + 1 :] = np.cumsum(totals[start:])
        if start > 0:
            offsets[:start] = -np.cumsum(totals[:start][::-1])[::-1]
        self._offsets = offsets

    def _panels(self, rhos: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.edges, rhos, side="right") - 1, 0, len(self.edges) - 2)

    def __call__(self, rhos: Any) -> np.ndarray:
        rhos = np.asarray(rhos, dtype=float)
        if self._slope is not None:
            return rhos * self._slope
        flat = rhos.ravel()
        out = np.empty(len(flat))
        index = self._panels(flat)
        for i in np.unique(index):
            m = index == i
            out[m] = self._offsets[i] + self._antiderivatives[i](flat[m])
        return out.reshape(rhos.shape)

    def derivative(self, rhos: Any) -> np.ndarray:
        rhos = np.asarray(rhos, dtype=float)
        if self._slope is not None:
            return np.full(rhos.shape, self._slope)
        flat = rhos.ravel()
        out = np.empty(len(flat))
        index = self._panels(flat)
        for i in np.unique(index):
            m = index == i
            out[m] = self._rates[i](flat[m])
        return out.reshape(rhos.shape)


def _default_tolerance(backend: ModelBackend) -> float:
    return 1e-9 if backend.is_map else 1e-6


def _signed_offset(backend: ModelBackend, p: np.ndarray, q: np.ndarray) -> float:
    d = wrap_difference(p[:2] - q[:2])
    if isinstance(backend, Suspension):
        e_minus, _ = backend.stable_direction(q)
        direction = e_minus[:2] / np.linalg.norm(e_minus[:2])
    else:
        direction, _ = backend.stable_direction(q)
    return float(d @ direction)


def _closed_form_tau(rho: float, alpha: float) -> float:
    return float(rho * LAMBDA_S**alpha)


def renorm_time(
    backend: ModelBackend,
    rho: float,
    alpha: float,
    x: Any,
    method: Literal["auto", "closed_form", "leaf", "cocycle"] = "auto",
    horizon: float = LEAF_HORIZON,
    tol: Optional[float] = None,
    check_derivative: bool = False,
) -> RenormResult:
    """
    tau(rho, alpha, x) with g_alpha(h_rho x) = h_tau(g_alpha x).
    ``leaf`` searches along the stable leaf of g_alpha x with a bracketed root finder;
    ``cocycle`` integrates the stable expansion along the horocycle segment.
    """
    x = np.asarray(x, dtype=float)
    tol = _default_tolerance(backend) if tol is None else tol
    if method == "auto":
        method = "closed_form" if isinstance(backend, LinearCat) else "leaf"
    if method == "closed_form" and not isinstance(backend, LinearCat):
        raise InvalidParameterError(f"No closed-form renormalization time on {backend.kind}")

    z = backend.flow(x, alpha)
    derivative = float(backend.stable_expansion(backend.horocycle(x, rho), alpha))
    if rho == 0.0 or alpha == 0.0:
        tau = rho
        residual = 0.0
    elif method == "closed_form":
        tau = float(backend.renorm_closed_form(rho, alpha))
        target = backend.flow(backend.horocycle(x, rho), alpha)
        residual = float(backend.torus_distance(backend.horocycle(z, tau), target))
    else:
        profile = RenormProfile(backend, x, alpha, min(rho, 0.0), max(rho, 0.0))
        guess = float(profile(rho))
        if method == "cocycle" or abs(guess) > horizon:
            if method == "leaf":
                raise SearchError(
                    f"Leaf search for tau ~ {guess:.4g} leaves the horizon {horizon}",
                    horizon=horizon,
                    stage="renorm_time",
                )
            tau = guess
            residual = profile.error
            if abs(tau) <= horizon:
                target = backend.flow(backend.horocycle(x, rho), alpha)
                residual = float(backend.torus_distance(backend.horocycle(z, tau), target))
        else:
            tau, residual = _leaf_search(backend, z, x, rho, alpha, guess, horizon)
            if residual > tol:
                raise ConvergenceError(
                    f"Leaf search residual {residual:.3e} exceeds {tol:.1e}",
                    residual=residual,
                    stage="renorm_time",
                )

    check = None
    if check_derivative:
        eta = 1e-5 * max(1.0, abs(rho))
        plus = renorm_time(backend, rho + eta, alpha, x, method=method, horizon=horizon, tol=tol)
        minus = renorm_time(backend, rho - eta, alpha, x, method=method, horizon=horizon, tol=tol)
        check = (plus.tau - minus.tau) / (2.0 * eta)
    return RenormResult(
        rho=float(rho),
        alpha=float(alpha),
        x=[float(v) for v in x],
        tau=float(tau),
        residual=float(residual),
        derivative=derivative,
        derivative_check=check,
        method=method,
    )


def _leaf_search(
    backend: ModelBackend,
    z: np.ndarray,
    x: np.ndarray,
    rho: float,
    alpha: float,
    guess: float,
    horizon: float,
) -> Tuple[float, float]:
    target = backend.flow(backend.horocycle(x, rho), alpha)

    def offset(tau: float) -> float:
        return _signed_offset(backend, backend.horocycle(z, tau), target)

    width = max(1e-8, 1e-6 * abs(guess))
    for _ in range(16):
        lo, hi = guess - width, guess + width
        if max(abs(lo), abs(hi)) > horizon:
            raise SearchError(
                f"Leaf bracket around {guess:.6g} reached the horizon {horizon}",
                horizon=horizon,
                stage="renorm_time",
            )
        f_lo, f_hi = offset(lo), offset(hi)
        if f_lo * f_hi <= 0:
            break
        width *= 8.0
    else:
        raise SearchError(
            f"No sign change of the leaf offset around tau={guess:.6g}",
            horizon=horizon,
            stage="renorm_time",
        )
    tau = float(brentq(offset, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200))
    residual = float(backend.torus_distance(backend.horocycle(z, tau), target))
    return tau, residual


def determinant_derivative(backend: ModelBackend, x: Any, alpha: float) -> np.ndarray:
    """d/drho tau(0, alpha, x) as det Dg_alpha on E_- times the metric normalization."""
    pts, single = as_points(x, backend.dim)
    e_minus, _ = backend.stable_direction(pts)
    image = np.einsum("nij,nj->ni", backend.differential(pts, alpha), e_minus)
    det = np.linalg.norm(image, axis=-1)
    moved = backend.flow(pts, alpha)
    e_image, _ = backend.stable_direction(moved)
    ratio = backend.speed(moved, e_image) / backend.speed(pts, e_minus)
    out = det * ratio
    return out[0] if single else out


def sample_points(backend: ModelBackend, rng: np.random.Generator, count: int) -> np.ndarray:
    pts = rng.random((count, backend.dim))
    if backend.dim == 3:
        pts[:, 2] *= backend.roof(pts[:, :2])
    return pts


def _sample_time(backend: ModelBackend, rng: np.random.Generator, low: float, high: float):
    if backend.is_map:
        return float(rng.integers(int(low), int(high) + 1))
    return float(rng.uniform(low, high))


def tau_identity_suite(
    backend: ModelBackend,
    rng: Optional[np.random.Generator] = None,
    samples: int = 20,
    growth_alphas: Sequence[float] = tuple(range(5, 16)),
    growth_rho: float = 1.0,
    decay_alphas: Sequence[float] = tuple(range(1, 9)),
    growth_points: int = 1,
) -> IdentityReport:
    """Residuals of the renormalization-time identities plus growth and decay fits."""
    if abs(growth_rho) < 1.0:
        raise InvalidParameterError(f"Growth checks need |rho| >= 1, got {growth_rho}")
    rng = rng or np.random.default_rng(0)
    pts = sample_points(backend, rng, samples)
    h_top = float(backend.topological_entropy())
    residuals: Dict[str, float] = {
        key: 0.0
        for key in (
            "zero_rho",
            "zero_alpha",
            "composition",
            "additivity",
            "derivative_shift",
            "derivative_cocycle",
            "integral_form",
            "determinant_form",
        )
    }
    derivative_min = np.inf

    def tau(rho: float, alpha: float, x: np.ndarray) -> float:
        return renorm_time(backend, rho, alpha, x).tau

    for x in pts:
        a1 = _sample_time(backend, rng, 1, 2)
        a2 = _sample_time(backend, rng, 1, 2)
        r1, r2 = rng.uniform(-0.5, 0.5, size=2)

        residuals["zero_rho"] = max(residuals["zero_rho"], abs(tau(0.0, a1, x)))
        residuals["zero_alpha"] = max(residuals["zero_alpha"], abs(tau(r1, 0.0, x) - r1))

        joint = tau(r1, a1 + a2, x)
        inner = tau(r1, a2, x)
        composed = tau(inner, a1, backend.flow(x, a2))
        residuals["composition"] = max(residuals["composition"], abs(joint - composed))

        split = tau(r1, a1, backend.horocycle(x, r2)) + tau(r2, a1, x)
        residuals["additivity"] = max(residuals["additivity"], abs(tau(r1 + r2, a1, x) - split))

        shifted = renorm_time(backend, r1, a1, x, check_derivative=True)
        closed = float(backend.stable_expansion(backend.horocycle(x, r1), a1))
        residuals["derivative_shift"] = max(
            residuals["derivative_shift"], abs(shifted.derivative_check - closed)
        )

        product = float(backend.stable_expansion(backend.flow(x, a2), a1)) * float(
            backend.stable_expansion(x, a2)
        )
        residuals["derivative_cocycle"] = max(
            residuals["derivative_cocycle"],
            abs(product - float(backend.stable_expansion(x, a1 + a2))),
        )

        if isinstance(backend, LinearCat):
            integral = r1 * float(backend.stable_expansion(x, a1))
        else:
            integral = float(RenormProfile(backend, x, a1, min(r1, 0.0), max(r1, 0.0))(r1))
        residuals["integral_form"] = max(residuals["integral_form"], abs(tau(r1, a1, x) - integral))

        at_zero = renorm_time(backend, 0.0, a1, x)
        eta = 1e-5
        fd = (tau(eta, a1, x) - tau(-eta, a1, x)) / (2.0 * eta)
        formula = float(determinant_derivative(backend, x, a1))
        reference = fd if not isinstance(backend, LinearCat) else at_zero.derivative
        residuals["determinant_form"] = max(
            residuals["determinant_form"], abs(formula - reference)
        )
        derivative_min = min(derivative_min, at_zero.derivative, shifted.derivative)

    growth_x = pts[:growth_points]
    log_tau = []
    ratios = []
    for alpha in growth_alphas:
        values = []
        for x in growth_x:
            if isinstance(backend, LinearCat):
                value = _closed_form_tau(growth_rho, -alpha)
            else:
                value = float(RenormProfile(backend, x, -alpha, 0.0, growth_rho)(growth_rho))
            values.append(abs(value))
            ratios.append(abs(value) / (abs(growth_rho) * np.exp(h_top * alpha)))
        log_tau.append(float(np.log(np.mean(values))))
    growth_exponent = float(np.polyfit(np.asarray(growth_alphas, dtype=float), log_tau, 1)[0])

    # tau(rho, alpha, x) = c solves as rho = tau(c, -alpha, g_alpha x) by composition.
    inverse = []
    for alpha in growth_alphas:
        for x in growth_x:
            if isinstance(backend, LinearCat):
                rho = _closed_form_tau(growth_rho, -alpha)
            else:
                z = backend.flow(x, alpha)
                rho = float(RenormProfile(backend, z, -alpha, 0.0, growth_rho)(growth_rho))
            inverse.append(abs(rho) / (abs(growth_rho) * np.exp(h_top * alpha)))

    window = np.linspace(0.0, 1.0, 64)
    log_sup = []
    for alpha in decay_alphas:
        orbit = orbit_points(backend, pts[0], window)
        log_sup.append(float(np.log(np.max(backend.stable_expansion(orbit, alpha)))))
    decay_theta = float(np.exp(np.polyfit(np.asarray(decay_alphas, dtype=float), log_sup, 1)[0]))

    report = IdentityReport(
        residuals=residuals,
        growth_exponent=growth_exponent,
        growth_ratio_min=float(min(ratios)),
        growth_ratio_max=float(max(ratios)),
        inverse_ratio_min=float(min(inverse)),
        inverse_ratio_max=float(max(inverse)),
        decay_theta=decay_theta,
        derivative_min=float(derivative_min),
        h_top=h_top,
        samples=samples,
    )
    worst = max(residuals.values())
    logger.info(
        f"tau identity suite on {backend.kind}: worst residual {worst:.3e}, "
        f"growth exponent {growth_exponent:.8f} (h_top {h_top:.8f}), theta {decay_theta:.6f}"
    )
    return report


def _panel_quadrature(
    backend: ModelBackend,
    x: Any,
    a: float,
    b: float,
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    panel: float,
    tol: float,
    refinements: int = 4,
) -> complex:
    """Composite Gauss-Legendre along the orbit of x, 16 against 24 nodes per panel."""
    if a == b:
        return 0j
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    low_x, low_w = np.polynomial.legendre.leggauss(LOW_ORDER)
    high_x, high_w = np.polynomial.legendre.leggauss(HIGH_ORDER)
    count = max(1, int(np.ceil((b - a) / panel)))
    for _ in range(refinements + 1):
        edges = np.linspace(a, b, count + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        half = 0.5 * (edges[1:] - edges[:-1])[:, None]
        low_nodes = mid + half * low_x[None, :]
        high_nodes = mid + half * high_x[None, :]
        rhos = np.concatenate([low_nodes.ravel(), high_nodes.ravel()])
        values = np.asarray(integrand(rhos, orbit_points(backend, x, rhos)), dtype=complex)
        low_vals = values[: low_nodes.size].reshape(low_nodes.shape)
        high_vals = values[low_nodes.size :].reshape(high_nodes.shape)
        low = np.sum(low_vals * low_w, axis=1) * half[:, 0]
        high = np.sum(high_vals * high_w, axis=1) * half[:, 0]
        errors = np.abs(high - low)
        if errors.sum() <= tol:
            return complex(sign * high.sum())
        count *= 2
    worst = int(np.argmax(errors))
    raise QuadratureError(
        f"Orbit quadrature on [{a:.6g}, {b:.6g}] missed tolerance {tol:.1e} "
        f"(estimate {errors.sum():.3e})",
        worst_panel=(float(edges[worst]), float(edges[worst + 1])),
        stage="horocycle_integral",
    )


def horocycle_integral(
    backend: ModelBackend,
    phi: Observable,
    x: Any,
    T: float,
    tol: Optional[float] = None,
    panel: Optional[float] = None,
) -> complex:
    """gamma_x(phi, T) = int_0^T phi(h_rho x) drho."""
    if T < 0:
        raise InvalidParameterError(f"Horocycle integrals need T >= 0, got {T}")
    tol = 1e-8 * max(1.0, T) if tol is None else tol
    panel = orbit_panel(phi) if panel is None else panel
    return _panel_quadrature(
        backend, x, 0.0, T, lambda _r, pts: _evaluate(phi, pts), panel, tol
    )


def linear_horocycle_integral(phi: FourierObservable, x: Any, T: float) -> complex:
    """Closed form of gamma_x(phi, T) on the linear cat map, mode by mode."""
    x = np.asarray(x, dtype=float)
    freq = 2.0 * np.pi * (phi.modes @ STABLE_VECTOR)
    phases = np.exp(2j * np.pi * (phi.modes @ x))
    # No nonzero lattice mode is orthogonal to the irrational stable direction.
    safe = np.where(freq == 0.0, 1.0, freq)
    terms = np.where(freq == 0.0, T, (np.exp(1j * freq * T) - 1.0) / (1j * safe))
    return complex(np.sum(phi.coefficients * phases * terms))


class SmoothWindow(BaseModel):
    """C-infinity window equal to 1 on [a + ramp, b - ramp] and supported in [a, b]."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float
    b: float
    ramp: float = Field(1.0, gt=0.0)

    @property
    def support(self) -> Tuple[float, float]:
        return (self.a, self.b)

    @property
    def support_length(self) -> float:
        return self.b - self.a

    def __call__(self, rho: Any) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return smooth_step((rho - self.a) / self.ramp) * smooth_step((self.b - rho) / self.ramp)

    def scaled(self, factor: float) -> SmoothWindow:
        """rho -> w(rho / factor)."""
        return SmoothWindow(a=self.a * factor, b=self.b * factor, ramp=self.ramp * factor)

    def integral(self) -> float:
        nodes, weights = np.polynomial.legendre.leggauss(64)
        edges = np.linspace(self.a, self.b, 33)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            total += half * float(np.sum(weights * self(lo + half * (nodes + 1.0))))
        return total

    def holder_norm(self, exponent: float, samples: int = 4096) -> float:
        """max(sup |w|, Holder seminorm of the given exponent) on a sampling grid."""
        grid = np.linspace(self.a, self.b, samples)
        values = self(grid)
        seminorm = 0.0
        step = grid[1] - grid[0]
        shift = 1
        while shift < samples:
            diff = np.abs(values[shift:] - values[:-shift])
            seminorm = max(seminorm, float(np.max(diff)) / (shift * step) ** exponent)
            shift *= 2
        return max(float(np.max(np.abs(values))), seminorm)


def _window_support(window: Any, support: Optional[Tuple[float, float]]) -> Tuple[float, float]:
    support = support if support is not None else getattr(window, "support", None)
    if support is None or not np.all(np.isfinite(support)):
        raise InvalidParameterError("Weighted horocycle integrals need a bounded window support")
    a, b = float(support[0]), float(support[1])
    if not a < b:
        raise InvalidParameterError(f"Empty window support [{a}, {b}]")
    return a, b


def weighted_integral(
    backend: ModelBackend,
    window: Callable[[np.ndarray], np.ndarray],
    x: Any,
    phi: Observable,
    support: Optional[Tuple[float, float]] = None,
    tol: float = 1e-11,
    panel: Optional[float] = None,
) -> complex:
    """gamma_{w,x}(phi) = int w(rho) phi(h_rho x) drho."""
    a, b = _window_support(window, support)
    panel = orbit_panel(phi) if panel is None else panel
    return _panel_quadrature(
        backend,
        x,
        a,
        b,
        lambda rhos, pts: np.asarray(window(rhos)) * _evaluate(phi, pts),
        panel,
        tol * max(1.0, b - a),
    )


def transfer_image(backend: ModelBackend, phi: Observable, alpha: float):
    """Pointwise L_alpha phi = phi_alpha (phi o g_-alpha) with the horocycle weight."""

    def image(points: np.ndarray) -> np.ndarray:
        weight = backend.horocycle_weight(points, alpha)
        return weight * _evaluate(phi, backend.flow(points, -alpha))

    return image


def transported_integral(
    backend: ModelBackend,
    window: Callable[[np.ndarray], np.ndarray],
    support: Tuple[float, float],
    x: Any,
    alpha: float,
    phi: Observable,
    tol: float = 1e-11,
    panel: Optional[float] = None,
) -> complex:
    """gamma_{w o tau(., -alpha, g_alpha x), g_alpha x}(L_alpha phi) on the image leaf."""
    a, b = support
    x = np.asarray(x, dtype=float)
    y = backend.flow(x, alpha)
    forward = RenormProfile(backend, x, alpha, min(a, 0.0), max(b, 0.0))
    ra, rb = (float(v) for v in forward(np.array([a, b])))
    lo, hi = min(ra, rb), max(ra, rb)
    margin = 1e-6 * max(1.0, hi - lo)
    lo, hi = lo - margin, hi + margin
    backward = RenormProfile(backend, y, -alpha, min(lo, 0.0), max(hi, 0.0))
    stretch = float(np.max(backward.derivative(np.linspace(lo, hi, 64))))
    panel = (orbit_panel(phi) if panel is None else panel) / max(stretch, 1e-300)
    image = transfer_image(backend, phi, alpha)
    return _panel_quadrature(
        backend,
        y,
        lo,
        hi,
        lambda rhos, pts: np.asarray(window(backward(rhos))) * image(pts),
        panel,
        tol * max(1.0, b - a),
    )


def renorm_identity_check(
    backend: ModelBackend,
    window: SmoothWindow,
    x: Any,
    phi: Observable,
    alpha: float,
) -> float:
    """|gamma_{w,x}(phi) - gamma_{w o tau(., -alpha, g_alpha x), g_alpha x}(L_alpha phi)|."""
    if alpha < 0:
        raise InvalidParameterError(
            f"Renormalization identity is checked for alpha >= 0, got {alpha}"
        )
    left = weighted_integral(backend, window, x, phi)
    right = transported_integral(backend, window, window.support, x, alpha, phi)
    residual = abs(left - right)
    logger.debug(f"Renormalization identity alpha={alpha} residual={residual:.3e}")
    return float(residual)


def anisotropic_norm(
    phi: FourierObservable,
    partition: DyadicPartition,
    ensemble: ConeEnsemble,
    index: AnisotropicIndex,
) -> float:
    """p = 2 truncated (s, t, q) norm of a trigonometric polynomial."""
    weights = mode_weights(partition, ensemble, index, phi.modes)
    return float(np.sqrt(np.sum(weights * np.abs(phi.coefficients) ** 2)))


def dual_bound_probe(
    backend: ModelBackend,
    window: SmoothWindow,
    x: Any,
    samples: Sequence[FourierObservable],
    partition: DyadicPartition,
    ensemble: ConeEnsemble,
    index: AnisotropicIndex,
) -> DualBoundReport:
    """sup |gamma_{w,x}(phi)| / ||phi|| against the envelope |supp w| ||w||_{C^-s}."""
    if not index.s < 0:
        raise InvalidParameterError(f"Dual bound needs s < 0, got {index.s}")
    holder = window.holder_norm(-index.s)
    envelope = window.support_length * holder
    ratios: List[float] = []
    for phi in samples:
        norm = anisotropic_norm(phi, partition, ensemble, index)
        if norm > 0:
            ratios.append(abs(weighted_integral(backend, window, x, phi)) / norm)
    max_ratio = max(ratios) if ratios else 0.0
    logger.info(
        f"Dual bound: |supp w|={window.support_length:.4g} holder={holder:.4g} "
        f"max ratio={max_ratio:.4e}"
    )
    return DualBoundReport(
        support_length=window.support_length,
        holder_norm=holder,
        envelope=envelope,
        max_ratio=max_ratio,
        implied_constant=max_ratio / envelope,
    )
