from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import fftconvolve

from anisores.exceptions import HypothesisError, InvalidParameterError, ResolutionError
from anisores.logging import get_logger
from anisores.models import IbpReport, MollifierSweep, RegularizedSplit

logger = get_logger("anisores.oscillatory_quadrature")

SUPPORT_TOL = 1e-12
GRADIENT_FLOOR = 1e-10


class PhasePair(BaseModel):
    """Phase G with gradient samples and a compactly supported amplitude f on a uniform grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spacing: float = Field(..., gt=0.0)
    points: np.ndarray = Field(..., description="Grid points, shape (n,)*d + (d,).")
    phase: np.ndarray
    gradient: np.ndarray = Field(..., description="grad G samples, shape (n,)*d + (d,).")
    amplitude: np.ndarray
    delta: Optional[float] = Field(None, description="Holder exponent of f when only C^delta.")
    smoothness: Optional[int] = Field(None, description="Number of derivatives f carries.")

    @model_validator(mode="after")
    def _shapes(self) -> PhasePair:
        if self.phase.shape != self.amplitude.shape:
            raise InvalidParameterError("Phase and amplitude grids differ")
        if self.gradient.shape != self.phase.shape + (self.dim,):
            raise InvalidParameterError("Gradient samples must carry one component per axis")
        if self.delta is not None and not 0 < self.delta <= 1:
            raise InvalidParameterError(f"Holder exponent must lie in (0, 1], got {self.delta}")
        return self

    @property
    def dim(self) -> int:
        return self.phase.ndim

    @property
    def cell(self) -> float:
        return self.spacing**self.dim

    def support(self) -> np.ndarray:
        scale = float(np.max(np.abs(self.amplitude))) if self.amplitude.size else 0.0
        return np.abs(self.amplitude) > SUPPORT_TOL * scale

    @classmethod
    def sample(
        cls,
        phase: Callable[[np.ndarray], np.ndarray],
        gradient: Callable[[np.ndarray], np.ndarray],
        amplitude: Callable[[np.ndarray], np.ndarray],
        lower: float = -2.0,
        upper: float = 2.0,
        points: int = 1024,
        dim: int = 1,
        delta: Optional[float] = None,
        smoothness: Optional[int] = None,
    ) -> PhasePair:
        axis = np.linspace(lower, upper, points + 1)[:-1]
        grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
        return cls(
            spacing=float(axis[1] - axis[0]),
            points=grid,
            phase=np.asarray(phase(grid), dtype=float),
            gradient=np.asarray(gradient(grid), dtype=float),
            amplitude=np.asarray(amplitude(grid), dtype=complex),
            delta=delta,
            smoothness=smoothness,
        )


def bump(z: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """exp(-1 / (1 - |z / radius|^2)) inside the ball, 0 outside."""
    z = np.asarray(z, dtype=float)
    r2 = np.sum((z / radius) ** 2, axis=-1) if z.ndim > 1 else (z / radius) ** 2
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(r2 < 1.0, np.exp(-1.0 / np.where(r2 < 1.0, 1.0 - r2, 1.0)), 0.0)


def oscillatory_integral(
    pair: PhasePair, amplitude: Optional[np.ndarray] = None, L: float = 1.0
) -> complex:
    """int e^(i L G) f by the rectangle rule (spectrally accurate for compact smooth f)."""
    f = pair.amplitude if amplitude is None else amplitude
    return complex(np.sum(np.exp(1j * L * pair.phase) * f) * pair.cell)


def spectral_derivative(values: np.ndarray, spacing: float, axis: int) -> np.ndarray:
    """d/dz_axis of compactly supported grid data, zero-padded to twice the length."""
    n = values.shape[axis]
    padded = scipy.fft.fft(values, n=2 * n, axis=axis)
    k = 2j * np.pi * scipy.fft.fftfreq(2 * n, d=spacing)
    shape = [1] * values.ndim
    shape[axis] = 2 * n
    out = scipy.fft.ifft(padded * k.reshape(shape), axis=axis)
    return np.take(out, np.arange(n), axis=axis)


def spectral_divergence(field: np.ndarray, spacing: float) -> np.ndarray:
    dim = field.shape[-1]
    return sum(spectral_derivative(field[..., i], spacing, i) for i in range(dim))


def _ibp_step(pair: PhasePair, amplitude: np.ndarray) -> np.ndarray:
    norm2 = np.sum(pair.gradient**2, axis=-1)
    safe = np.where(norm2 > 0, norm2, 1.0)
    field = pair.gradient * (amplitude / safe)[..., None]
    return spectral_divergence(field, pair.spacing)


def _check_gradient(pair: PhasePair) -> float:
    mask = pair.support()
    if not mask.any():
        return np.inf
    smallest = float(np.min(np.linalg.norm(pair.gradient[mask], axis=-1)))
    if smallest <= GRADIENT_FLOOR:
        raise HypothesisError(
            f"Phase gradient vanishes on the amplitude support (min |grad G| = {smallest:.3e})",
            stage="oscillatory_quadrature",
        )
    return smallest


def ibp_transform(pair: PhasePair) -> Tuple[np.ndarray, IbpReport]:
    """V_1 = div(grad G f / |grad G|^2) with int e^(iG) f = i int e^(iG) V_1."""
    _check_gradient(pair)
    V1 = _ibp_step(pair, pair.amplitude)
    residual = abs(oscillatory_integral(pair) - 1j * oscillatory_integral(pair, V1))
    logger.debug(f"Integration by parts residual {residual:.3e}")
    return V1, IbpReport(residual=float(residual), order=1)


def _derivative_sup(values: np.ndarray, spacing: float, order: int) -> List[float]:
    """sup over partial derivatives of each order 0..order."""
    layers = [[values]]
    sups = [float(np.max(np.abs(values)))]
    for _ in range(order):
        nxt = [
            spectral_derivative(v, spacing, axis)
            for v in layers[-1]
            for axis in range(values.ndim)
        ]
        layers.append(nxt)
        sups.append(max(float(np.max(np.abs(v))) for v in nxt))
    return sups


def ibp_iterate(pair: PhasePair, k: int) -> Tuple[np.ndarray, IbpReport]:
    """V_k with V_k = |grad G|^-k f_k; reports sup |f_k| against its derivative envelope."""
    if k < 0:
        raise InvalidParameterError(f"Iteration count must be >= 0, got {k}")
    if pair.smoothness is not None and k > pair.smoothness:
        raise InvalidParameterError(
            f"{k} integrations by parts exceed the amplitude's {pair.smoothness} derivatives"
        )
    if k == 0:
        return pair.amplitude, IbpReport(residual=0.0, order=0)
    smallest = _check_gradient(pair)
    V = pair.amplitude
    for _ in range(k):
        V = _ibp_step(pair, V)
    residual = abs(oscillatory_integral(pair) - (1j**k) * oscillatory_integral(pair, V))
    norm = np.linalg.norm(pair.gradient, axis=-1)
    mask = pair.support()
    measured = float(np.max(np.abs(norm**k * V)[mask])) if mask.any() else 0.0

    curvature = 0.0
    derivative = pair.gradient
    for _ in range(k):
        derivative = np.stack(
            [np.gradient(derivative, pair.spacing, axis=a) for a in range(pair.dim)], axis=-1
        )
        if mask.any():
            curvature = max(curvature, float(np.max(np.abs(derivative[mask]))) / smallest)
    f_sups = _derivative_sup(pair.amplitude, pair.spacing, k)
    envelope = pair.dim**k * max(f_sups) * max(1.0, curvature) ** k
    return V, IbpReport(
        residual=float(residual), order=k, measured_norm=measured, envelope=float(envelope)
    )


def ibp_decay(
    build: Callable[[float], PhasePair], scales: Sequence[float], k: int
) -> IbpReport:
    """Fitted exponent of int |V_k| against L for the phases L G, expected to be k."""
    scales = np.asarray(scales, dtype=float)
    sizes = []
    worst = 0.0
    for L in scales:
        pair = build(float(L))
        V, report = ibp_iterate(pair, k)
        sizes.append(float(np.sum(np.abs(V)) * pair.cell))
        worst = max(worst, report.residual)
    slope = float(np.polyfit(np.log(scales), np.log(sizes), 1)[0])
    return IbpReport(residual=worst, order=k, decay_exponent=-slope)


def mollifier(epsilon: float, spacing: float, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit-mass bump nu_eps on the grid and its gradient, both supported in |z| < eps."""
    m = int(np.ceil(epsilon / spacing))
    axis = np.arange(-m, m + 1) * spacing
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
    r2 = np.sum((grid / epsilon) ** 2, axis=-1)
    inside = r2 < 1.0
    base = np.zeros(r2.shape)
    base[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    mass = float(np.sum(base)) * spacing**dim
    kernel = base / mass
    # d/dz exp(-1/(1-r^2)) = -2 z / (eps^2 (1 - r^2)^2) exp(...)
    factor = np.zeros(r2.shape)
    factor[inside] = -2.0 / (epsilon**2 * (1.0 - r2[inside]) ** 2)
    gradient = (factor * kernel)[..., None] * grid
    return kernel, gradient


def _convolve(values: np.ndarray, kernel: np.ndarray, cell: float) -> np.ndarray:
    real = fftconvolve(values.real, kernel, mode="same")
    imag = fftconvolve(values.imag, kernel, mode="same") if np.iscomplexobj(values) else 0.0
    return (real + 1j * imag) * cell


def regularized_ibp(pair: PhasePair, L: float, epsilon: float) -> RegularizedSplit:
    """
    int e^(iLG) f = (i/L) int e^(iLG) div h_eps + int e^(iLG) grad G . (h - h_eps)
    with h = grad G f / |grad G|^2 and h_eps = h * nu_eps. epsilon = 0 skips the smoothing.
    """
    if L < 1:
        raise InvalidParameterError(f"Regularized integration by parts needs L >= 1, got {L}")
    if epsilon != 0 and epsilon < 2.0 * pair.spacing:
        raise ResolutionError(
            f"Mollifier scale {epsilon:.3e} is below the grid resolution {pair.spacing:.3e}",
            stage="oscillatory_quadrature",
        )
    _check_gradient(pair)
    norm2 = np.sum(pair.gradient**2, axis=-1)
    h = pair.gradient * (pair.amplitude / np.where(norm2 > 0, norm2, 1.0))[..., None]
    if epsilon == 0:
        h_eps = h
        divergence = spectral_divergence(h, pair.spacing)
        gradient_norm = float(
            max(np.max(np.abs(spectral_derivative(h[..., i], pair.spacing, a)))
                for i in range(pair.dim) for a in range(pair.dim))
        )
    else:
        kernel, kernel_gradient = mollifier(epsilon, pair.spacing, pair.dim)
        h_eps = np.stack(
            [_convolve(h[..., i], kernel, pair.cell) for i in range(pair.dim)], axis=-1
        )
        partials = [
            [_convolve(h[..., i], kernel_gradient[..., a], pair.cell) for a in range(pair.dim)]
            for i in range(pair.dim)
        ]
        divergence = sum(partials[i][i] for i in range(pair.dim))
        gradient_norm = float(max(np.max(np.abs(p)) for row in partials for p in row))

    wave = np.exp(1j * L * pair.phase)
    direct = oscillatory_integral(pair, L=L)
    smoothed = (1j / L) * complex(np.sum(wave * divergence) * pair.cell)
    remainder = complex(np.sum(wave * np.sum(pair.gradient * (h - h_eps), axis=-1)) * pair.cell)
    residual = abs(direct - smoothed - remainder)
    difference = float(np.max(np.abs(h - h_eps)))
    logger.debug(
        f"Regularized split L={L:.4g} eps={epsilon:.3e}: residual {residual:.3e}, "
        f"|grad h_eps|={gradient_norm:.4e}, |h - h_eps|={difference:.4e}"
    )
    return RegularizedSplit(
        L=float(L),
        epsilon=float(epsilon),
        direct_real=direct.real,
        direct_imag=direct.imag,
        smoothed_term=abs(smoothed),
        remainder_term=abs(remainder),
        residual=float(residual),
        gradient_norm=gradient_norm,
        difference_norm=difference,
    )


def mollifier_sweep(
    pair: PhasePair, epsilons: Sequence[float], L: Optional[float] = None
) -> MollifierSweep:
    """
    Slopes of log sup|h - h_eps| (about delta) and log sup|grad h_eps| (about delta - 1)
    against log eps, and the decay in L of the balanced bound at eps = 1/L.
    """
    epsilons = np.asarray(sorted(epsilons, reverse=True), dtype=float)
    splits = [regularized_ibp(pair, L if L is not None else 1.0 / e, float(e)) for e in epsilons]
    differences = np.array([s.difference_norm for s in splits])
    gradients = np.array([s.gradient_norm for s in splits])
    log_eps = np.log(epsilons)
    difference_slope = float(np.polyfit(log_eps, np.log(differences), 1)[0])
    gradient_slope = float(np.polyfit(log_eps, np.log(gradients), 1)[0])
    balanced = epsilons * gradients + differences
    balanced_slope = float(np.polyfit(-log_eps, np.log(balanced), 1)[0])
    logger.info(
        f"Mollifier sweep: difference slope {difference_slope:.4f}, "
        f"gradient slope {gradient_slope:.4f}, balanced slope {balanced_slope:.4f}"
    )
    return MollifierSweep(
        epsilons=[float(e) for e in epsilons],
        difference_norms=[float(v) for v in differences],
        gradient_norms=[float(v) for v in gradients],
        difference_slope=difference_slope,
        gradient_slope=gradient_slope,
        identity_residual=float(max(s.residual for s in splits)),
        balanced_slope=balanced_slope,
    )
