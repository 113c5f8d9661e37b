from __future__ import annotations

import itertools
from typing import Any, List, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.optimize import brentq
from scipy.stats import linregress

from anisores.backends import (
    CAT_MATRIX,
    LinearCat,
    ModelBackend,
    PerturbedCat,
    Suspension,
)
from anisores.backends.base import as_points, restore, wrap_difference
from anisores.cache import FieldCache
from anisores.config import BackendConfig, ConeConfig
from anisores.exceptions import (
    ConvergenceError,
    GeometryError,
    InvalidParameterError,
    SolverError,
)
from anisores.logging import get_logger
from anisores.models import LambdaMinFit, PeriodicOrbitReport
from anisores.spectral_blocks import (
    cone_hyperbolicity_check,
    ensemble_from_config,
    torus_grid,
)

logger = get_logger("anisores.dynamics_models")


@runtime_checkable
class CocycleWeight(Protocol):
    """Anything that evaluates a multiplicative weight cocycle phi_alpha on points."""

    def evaluate(self, backend: Any, x: Any, alpha: float) -> np.ndarray: ...


def build_backend(
    config: Optional[BackendConfig] = None,
    cache: Optional[FieldCache] = None,
    certify: bool = True,
) -> ModelBackend:
    """
    Construct the configured model system.
    Perturbed maps are only returned once the one-step cone certificate passes.
    """
    config = config or BackendConfig()
    if config.kind == "linear_cat":
        backend: Any = LinearCat(
            smoothness=config.smoothness,
            direction_iterations=config.direction_iterations,
            cache=cache,
        )
    elif config.kind == "perturbed_cat":
        backend = PerturbedCat(
            config.epsilon,
            shape=config.shape,
            smoothness=config.smoothness,
            direction_iterations=config.direction_iterations,
            cache=cache,
        )
        if certify:
            certificate = cone_hyperbolicity_check(
                backend.differential(torus_grid(16), -1), ensemble_from_config(ConeConfig())
            )
            if not certificate.holds:
                raise GeometryError(
                    f"Perturbed cat map at epsilon={config.epsilon} fails the cone certificate "
                    f"(margins {certificate.margin_minus:.3e}, {certificate.margin_zero:.3e})",
                    invariant="anosov_certificate",
                    stage="build_backend",
                )
    elif config.kind == "suspension":
        backend = Suspension(config.epsilon2, smoothness=config.smoothness, cache=cache)
    else:
        raise InvalidParameterError(f"Unknown backend kind {config.kind!r}")
    logger.info(f"Built backend {config.kind} key={getattr(backend, 'key', config.kind)}")
    return backend


def expansion_constant(backend: ModelBackend, x: Any, alpha: float, s: float, t: float):
    """
    lambda^(t,s,alpha)(x): the larger of ||(Dg_-alpha)^tr on E*_+||^t and
    ||(Dg_alpha)^tr on E*_-||^(-s), with the restricted norms taken on unit dual covectors.
    """
    if not s < 0 < t:
        raise InvalidParameterError(f"expansion_constant needs s < 0 < t, got s={s}, t={t}")
    pts, single = as_points(x, backend.dim)
    if alpha == 0:
        return restore(np.ones(len(pts)), single)
    back = backend.flow(pts, -alpha)
    # (Dg_-alpha(x))^tr takes covectors at g_-alpha x back to x.
    plus = backend.dual_directions(back)["plus"]
    D_back = backend.differential(pts, -alpha)
    plus_norm = np.linalg.norm(np.einsum("nji,nj->ni", D_back, plus), axis=-1)
    minus = backend.dual_directions(pts)["minus"]
    D_fwd = backend.differential(back, alpha)
    minus_norm = np.linalg.norm(np.einsum("nji,nj->ni", D_fwd, minus), axis=-1)
    return restore(np.maximum(plus_norm**t, minus_norm ** (-s)), single)


def _sample_points(backend: ModelBackend, grid: int) -> np.ndarray:
    if backend.dim == 2:
        return torus_grid(grid, 2)
    base = torus_grid(grid, 2)
    fibre = (np.arange(4) + 0.5) / 4
    pts = np.array([[b[0], b[1], f] for b in base for f in fibre])
    pts[:, 2] *= backend.roof(pts[:, :2])
    return pts


def lambda_min_estimate(
    backend: ModelBackend,
    weight: CocycleWeight,
    s: float,
    t: float,
    p: Optional[float] = 2.0,
    alphas: Optional[Sequence[float]] = None,
    grid: int = 16,
    determinant_path: Optional[bool] = None,
) -> LambdaMinFit:
    """
    Slope of log sup_x phi_alpha |det Dg_-alpha|^(-1/p) lambda^(t,s,alpha) over alpha.
    ``p=None`` drops the determinant factor.
    """
    alphas = list(alphas) if alphas is not None else list(range(5, 16))
    pts = _sample_points(backend, grid)
    if determinant_path is None:
        determinant_path = backend.dim == 3 and backend.volume_preserving
    t_tilde = min(t, -s)

    log_values: List[float] = []
    det_values: List[float] = []
    for alpha in alphas:
        phi = np.asarray(weight.evaluate(backend, pts, alpha), dtype=float)
        factor = np.ones(len(pts))
        if p is not None:
            det = np.abs(np.linalg.det(backend.differential(pts, -alpha)))
            factor = det ** (-1.0 / p)
        lam = expansion_constant(backend, pts, alpha, s, t)
        log_values.append(float(np.log(np.max(phi * factor * lam))))
        if determinant_path:
            back = backend.flow(pts, -alpha)
            minus = backend.dual_directions(pts)["minus"]
            D = backend.differential(back, alpha)
            restricted = np.linalg.norm(np.einsum("nji,nj->ni", D, minus), axis=-1)
            det_values.append(float(np.log(np.max(phi * factor * restricted**t_tilde))))

    fit = linregress(alphas, log_values)
    r_squared = float(fit.rvalue**2) if len(set(log_values)) > 1 else 1.0
    if r_squared < 0.99:
        logger.warning(
            f"lambda_min fit is not linear in alpha: r^2={r_squared:.4f} on {backend.kind}"
        )
    det_slope = None
    agreement = None
    if determinant_path:
        det_slope = float(linregress(alphas, det_values).slope)
        agreement = abs(det_slope - float(fit.slope))
    logger.debug(f"lambda_min={fit.slope:.8f} r2={r_squared:.5f} backend={backend.kind}")
    return LambdaMinFit(
        value=float(fit.slope),
        r_squared=r_squared,
        alphas=[float(a) for a in alphas],
        log_values=log_values,
        determinant_path=det_slope,
        agreement=agreement,
    )


def topological_entropy(backend: ModelBackend) -> float:
    """Closed form: log lambda_u for the maps, log lambda_u / mean roof for the suspension."""
    return float(backend.topological_entropy())


def linear_fixed_points(n: int) -> np.ndarray:
    """All points of the 2-torus fixed by A^n, from the lattice of A^n - I."""
    B = np.linalg.matrix_power(CAT_MATRIX.astype(np.int64), n) - np.eye(2, dtype=np.int64)
    count = int(round(abs(np.linalg.det(B))))
    B_inv = np.linalg.inv(B.astype(float))
    # x = B^-1 m mod 1; m ranges over the integer points of B[0, 1)^2.
    corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]]) @ B.T
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    m = np.array(
        list(itertools.product(range(lo[0], hi[0] + 1), range(lo[1], hi[1] + 1))), dtype=float
    )
    x = np.mod(m @ B_inv.T, 1.0)
    keys = np.mod(np.round(x, 9), 1.0)
    _, first = np.unique(keys, axis=0, return_index=True)
    points = x[np.sort(first)]
    if len(points) != count:
        raise SolverError(
            f"Found {len(points)} period-{n} points, expected |det(A^n - I)| = {count}",
            stage="periodic_orbit_entropy",
        )
    return points


def _continue_fixed_points(backend: PerturbedCat, n: int, seeds: np.ndarray) -> np.ndarray:
    x = seeds.copy()
    eye = np.eye(2)
    for _ in range(30):
        residual = wrap_difference(backend.flow(x, n) - x)
        J = backend.differential(x, n) - eye
        step = np.linalg.solve(J, residual[..., None])[..., 0]
        x = np.mod(x - step, 1.0)
        if np.max(np.abs(step)) < 1e-13:
            break
    else:
        raise ConvergenceError(
            f"Newton continuation of period-{n} points did not converge",
            residual=float(np.max(np.abs(step))),
            stage="periodic_orbit_entropy",
        )
    keys = {tuple(np.round(p, 8) % 1.0) for p in x}
    if len(keys) < len(x):
        logger.warning(f"Continuation merged {len(x) - len(keys)} period-{n} points")
    return x


def periodic_orbit_entropy(
    backend: ModelBackend, periods: Sequence[int] = (2, 3, 4, 5, 6)
) -> PeriodicOrbitReport:
    """Growth rate of periodic orbits; for the suspension the root of the Bowen equation."""
    periods = list(periods)
    counts: List[int] = []
    estimates: List[float] = []
    for n in periods:
        points = linear_fixed_points(n)
        if isinstance(backend, PerturbedCat) and backend.epsilon > 0:
            points = _continue_fixed_points(backend, n, points)
        counts.append(len(points))
        if isinstance(backend, Suspension):
            orbit_roof = np.zeros(len(points))
            y = points.copy()
            for _ in range(n):
                orbit_roof += backend.roof(y)
                y = np.mod(y @ CAT_MATRIX.T, 1.0)

            def pressure(h: float) -> float:
                return float(np.log(np.sum(np.exp(-h * orbit_roof))) / n)

            upper = 2.0 * np.log(len(points)) / (n * backend.roof_min)
            try:
                estimates.append(float(brentq(pressure, 0.0, upper)))
            except ValueError as exc:
                raise SolverError(
                    f"Bowen equation has no sign change on [0, {upper:.3f}]",
                    stage="periodic_orbit_entropy",
                ) from exc
        else:
            estimates.append(float(np.log(len(points)) / n))
    report = PeriodicOrbitReport(
        periods=periods,
        counts=counts,
        estimates=estimates,
        estimate=estimates[-1],
        formula=topological_entropy(backend),
    )
    logger.info(
        f"Periodic-orbit entropy {report.estimate:.6f} vs formula {report.formula:.6f} "
        f"on {backend.kind}"
    )
    return report
