from __future__ import annotations

from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from anisores.backends import LAMBDA_S, LinearCat, ModelBackend
from anisores.exceptions import DependencyError, InvalidParameterError, SolverError
from anisores.horocycle_lab import (
    Observable,
    RenormProfile,
    orbit_panel,
    horocycle_integral,
    orbit_points,
    transported_integral,
    weighted_integral,
)
from anisores.logging import get_logger
from anisores.models import CutoffSummary, ExpansionFit, ExpansionTerm
from anisores.observables import FourierObservable, mode_index
from anisores.resonances import ResonanceRecord
from anisores.spectral_blocks import smooth_step

logger = get_logger("anisores.horocycle_expansion")

SEARCH_STEPS = 200
QUAD_PANELS = 64


class _Side:
    """
    One end of [0, T]: base point, orientation and the chain (rho_k, beta_k) with
    sign * tau(sign * rho_k, beta_k, base) = 1 / epsilon and the profiles of tau(., beta_k, base).
    """

    def __init__(self, backend: ModelBackend, base: np.ndarray, sign: float, offset: float):
        self.backend = backend
        self.base = base
        self.sign = sign
        self.offset = offset
        self.lengths: List[float] = []
        self.betas: List[float] = []
        self.profiles: List[RenormProfile] = []
        self._nodes: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}

    def tau(self, length: float, beta: float) -> float:
        """sign * tau(sign * length, beta, base)."""
        if isinstance(self.backend, LinearCat):
            return float(length * LAMBDA_S**beta)
        if length not in self._nodes:
            nodes, weights = np.polynomial.legendre.leggauss(24)
            edges = np.linspace(0.0, length, QUAD_PANELS + 1)
            half = 0.5 * np.diff(edges)[:, None]
            rhos = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half * nodes[None, :]
            points = orbit_points(self.backend, self.base, self.sign * rhos.ravel())
            self._nodes[length] = (points, (half * weights[None, :]).ravel())
        points, weights = self._nodes[length]
        return float(np.sum(weights * self.backend.stable_expansion(points, beta)))

    def push(self, length: float, beta: float) -> None:
        lo, hi = (0.0, length) if self.sign > 0 else (-length, 0.0)
        self.lengths.append(length)
        self.betas.append(beta)
        self.profiles.append(RenormProfile(self.backend, self.base, beta, lo, hi))

    def next_length(self) -> float:
        """r in (0, rho_last) with sign * tau(sign * r, beta_last, base) = 1."""
        profile, top = self.profiles[-1], self.lengths[-1]
        if isinstance(self.backend, LinearCat):
            return float(LAMBDA_S ** (-self.betas[-1]))

        def gap(r: float) -> float:
            return float(self.sign * profile(self.sign * r)) - 1.0

        return float(brentq(gap, 0.0, top, xtol=1e-14 * top, rtol=1e-13))

    def magnitude(self, k: int, rho: Any) -> np.ndarray:
        """sign * tau(local rho, beta_k, base), +inf past rho_k and -inf behind the base."""
        u = self.sign * (np.asarray(rho, dtype=float) - self.offset)
        out = np.full(u.shape, np.inf)
        out[u <= 0.0] = -np.inf
        inside = (u > 0.0) & (u < self.lengths[k])
        if inside.any():
            out[inside] = self.sign * self.profiles[k](self.sign * u[inside])
        return out

    def steps(self, h: float) -> np.ndarray:
        return np.exp(h * np.diff(np.asarray(self.betas)))


class CutoffFamily:
    """
    Smooth partition of (0, T) adapted to the renormalization: w_0 plus the telescoping
    differences w_k = w_k^+ + w_k^- whose pull-backs by g_(beta_k) live at unit scale.
    On map backends the times beta_k are integers.
    """

    def __init__(
        self,
        backend: ModelBackend,
        T: float,
        x: Any,
        epsilon: float = 0.25,
        integer_times: Optional[bool] = None,
        max_depth: int = 64,
    ):
        if not T > 0:
            raise InvalidParameterError(f"Cutoff family needs T > 0, got {T}")
        if not 0 < epsilon <= 0.25:
            raise InvalidParameterError(f"Cutoff scale must lie in (0, 1/4], got {epsilon}")
        self.backend = backend
        self.T = float(T)
        self.x = np.asarray(x, dtype=float)
        self.epsilon = float(epsilon)
        self.integer_times = backend.is_map if integer_times is None else integer_times
        self.max_depth = max_depth
        self.h = float(backend.topological_entropy())
        self.y = backend.horocycle(self.x, self.T)
        self.plus = _Side(backend, self.x, 1.0, 0.0)
        self.minus = _Side(backend, self.y, -1.0, self.T)

        beta0 = self._solve_beta(self.plus, self.T, np.log(self.T * self.epsilon) / self.h)
        self.plus.push(self.T, beta0)
        self.minus.push(self.T, beta0)
        self.initial_defect = abs(self.plus.tau(self.T, beta0) - 1.0 / self.epsilon)

        floor = min(1.0, self.T) * self.epsilon
        while self.plus.lengths[-1] > floor and len(self.plus.betas) <= max_depth:
            self.extend(len(self.plus.betas))
        self.c1 = self._c1()
        self.depth = self._depth()
        if self.depth >= len(self.plus.betas):
            self.extend(self.depth)
        logger.info(
            f"Cutoff family T={self.T:.6g} eps={self.epsilon} beta_0={beta0:.10g} "
            f"depth={self.depth} C1={self.c1:.4f}"
        )

    def _solve_beta(self, side: _Side, length: float, hint: float) -> float:
        """beta with side.tau(length, beta) = 1/eps, or the largest integer reaching it."""
        target = 1.0 / self.epsilon
        if length == target:
            return 0.0
        if isinstance(self.backend, LinearCat) and not self.integer_times:
            return float(np.log(length * self.epsilon) / self.h)

        def gap(beta: float) -> float:
            return side.tau(length, beta) - target

        if self.integer_times:
            beta = int(np.floor(hint))
            for _ in range(SEARCH_STEPS):
                if gap(beta) < 0:
                    beta -= 1
                elif gap(beta + 1) >= 0:
                    beta += 1
                else:
                    return float(beta)
            raise SolverError(
                f"Integer cutoff time search did not settle near {hint:.4g}", stage="cutoff_family"
            )

        width = 1.0
        for _ in range(30):
            lo, hi = hint - width, hint + width
            if gap(lo) > 0 > gap(hi):
                return float(brentq(gap, lo, hi, xtol=1e-13, rtol=1e-13))
            width *= 2.0
        raise SolverError(
            f"Cutoff time bracket around {hint:.4g} failed", stage="cutoff_family"
        )

    def extend(self, K: int) -> None:
        """Make sure beta_k^+/- exist for k <= K."""
        step = np.log(self.epsilon) / self.h
        for side in (self.plus, self.minus):
            while len(side.betas) <= K:
                length = side.next_length()
                beta = self._solve_beta(side, length, side.betas[-1] + step)
                if not beta < side.betas[-1]:
                    raise SolverError(
                        f"Cutoff times stopped decreasing at k={len(side.betas)}",
                        stage="cutoff_family",
                    )
                side.push(length, beta)

    def _c1(self) -> float:
        worst = 1.0
        for side in (self.plus, self.minus):
            ratios = side.steps(self.h) / self.epsilon
            if len(ratios):
                worst = max(worst, float(np.max(ratios)), float(np.max(1.0 / ratios)))
        return worst

    def _depth(self) -> int:
        scale = self.c1 * self.epsilon
        if self.T <= self.c1 or scale >= 1.0:
            return 0
        return int(min(self.max_depth, np.floor(-np.log(self.T / self.c1) / np.log(scale))))

    @property
    def betas_plus(self) -> List[float]:
        return self.plus.betas[: self.depth + 1]

    @property
    def betas_minus(self) -> List[float]:
        return self.minus.betas[: self.depth + 1]

    def _wplus(self, v: np.ndarray) -> np.ndarray:
        quarter = 0.25 / self.epsilon
        with np.errstate(invalid="ignore"):
            return smooth_step((v - quarter) / quarter)

    def factor(self, side: str, k: int, rho: Any) -> np.ndarray:
        chosen = self.plus if side == "plus" else self.minus
        return self._wplus(chosen.magnitude(k, rho))

    def w0(self, rho: Any) -> np.ndarray:
        return self.factor("plus", 0, rho) * self.factor("minus", 0, rho)

    def term(self, side: str, k: int, rho: Any) -> np.ndarray:
        """w_k^+ or w_k^- for k >= 1."""
        self.extend(k)
        return self.factor(side, k, rho) - self.factor(side, k - 1, rho)

    def weight(self, k: int, rho: Any) -> np.ndarray:
        if k == 0:
            return self.w0(rho)
        return self.term("plus", k, rho) + self.term("minus", k, rho)

    def partial_sum(self, K: int, rho: Any) -> np.ndarray:
        """sum_(k <= K) w_k, telescoped."""
        self.extend(K)
        plus0, minus0 = self.factor("plus", 0, rho), self.factor("minus", 0, rho)
        if K == 0:
            return plus0 * minus0
        return (
            plus0 * minus0
            + self.factor("plus", K, rho)
            - plus0
            + self.factor("minus", K, rho)
            - minus0
        )

    def window(self, rho: Any) -> np.ndarray:
        return self.partial_sum(self.depth, rho)

    def indicator_defect(self, K: int, grid: Any) -> float:
        grid = np.asarray(grid, dtype=float)
        indicator = ((grid > 0) & (grid < self.T)).astype(float)
        return float(np.max(np.abs(self.partial_sum(K, grid) - indicator)))

    def breakpoints(self, K: Optional[int] = None) -> np.ndarray:
        K = self.depth if K is None else K
        self.extend(K + 1)
        points = [0.0, self.T]
        points += [r for r in self.plus.lengths[: K + 2] if 0 < r < self.T]
        points += [self.T - r for r in self.minus.lengths[: K + 2] if 0 < r < self.T]
        return np.unique(np.asarray(points))

    def summary(self, grid: Optional[Any] = None, extra: int = 4) -> CutoffSummary:
        if grid is None:
            grid = np.linspace(0.0, self.T, 2001)[1:-1]
        defects = [self.indicator_defect(K, grid) for K in range(self.depth + extra + 1)]
        return CutoffSummary(
            T=self.T,
            epsilon=self.epsilon,
            depth=self.depth,
            betas_plus=[float(b) for b in self.betas_plus],
            betas_minus=[float(b) for b in self.betas_minus],
            c1=self.c1,
            initial_defect=self.initial_defect,
            indicator_defects=defects,
            integer_times=self.integer_times,
        )


def cutoff_family(
    backend: ModelBackend,
    T: float,
    x: Any,
    epsilon: float = 0.25,
    integer_times: Optional[bool] = None,
) -> CutoffFamily:
    return CutoffFamily(backend, T, x, epsilon=epsilon, integer_times=integer_times)


def _piecewise_window_integral(
    backend: ModelBackend,
    family: CutoffFamily,
    phi: Observable,
) -> complex:
    edges = family.breakpoints()
    base = orbit_panel(phi)
    total = 0j
    for a, b in zip(edges[:-1], edges[1:]):
        total += weighted_integral(
            backend, family.window, family.x, phi, support=(a, b), panel=min(base, (b - a) / 2.0)
        )
    return total


def local_decomposition_check(
    backend: ModelBackend, family: CutoffFamily, phi: Observable
) -> float:
    """
    |gamma_{w,x}(phi) - sum of the renormalized pieces|, each piece being
    gamma_{w~_k, g_(beta_k) .}(L_(beta_k) phi).
    """
    direct = _piecewise_window_integral(backend, family, phi)
    pieces = transported_integral(
        backend, family.w0, (0.0, family.T), family.x, family.plus.betas[0], phi
    )
    for k in range(1, family.depth + 1):
        top_plus = family.plus.lengths[k - 1]
        top_minus = family.minus.lengths[k - 1]
        pieces += transported_integral(
            backend,
            lambda r, k=k: family.term("plus", k, r),
            (0.0, top_plus),
            family.x,
            family.plus.betas[k],
            phi,
        )
        pieces += transported_integral(
            backend,
            lambda s, k=k: family.term("minus", k, s + family.T),
            (-top_minus, 0.0),
            family.y,
            family.minus.betas[k],
            phi,
        )
    residual = abs(direct - pieces)
    logger.debug(
        f"Local decomposition T={family.T:.4g} depth={family.depth} residual={residual:.3e}"
    )
    return float(residual)


def _as_observable(vec: np.ndarray, K: int, dim: int) -> FourierObservable:
    scale = float(np.max(np.abs(vec))) if vec.size else 0.0
    return FourierObservable.from_vector(vec, K, dim, tol=1e-13 * scale)


def _jordan_levels(record: ResonanceRecord, matrix: Optional[Any]) -> List[int]:
    m = record.right.shape[1]
    if matrix is None or record.geometric_multiplicity == m:
        return [1] * m
    M = matrix.matrix if hasattr(matrix, "matrix") else matrix
    levels = []
    for col in record.right.T:
        v, level = col, 1
        scale = np.linalg.norm(col)
        while level < m:
            v = M @ v - record.mu * v
            if np.linalg.norm(v) <= 1e-7 * scale * max(1.0, abs(record.mu)):
                break
            level += 1
        levels.append(level)
    return levels


def envelope_exponent(T: Sequence[float], residual: Sequence[float], blocks: int = 4) -> float:
    """Least-squares slope of log max |E| per block of the log-spaced grid against log T."""
    logT = np.log(np.asarray(T, dtype=float))
    E = np.maximum(np.asarray(residual, dtype=float), 1e-300)
    chunks = [c for c in np.array_split(np.arange(len(logT)), blocks) if len(c)]
    if len(chunks) < 2:
        return 0.0
    centres = np.array([logT[c].mean() for c in chunks])
    peaks = np.array([np.log(E[c].max()) for c in chunks])
    return float(np.polyfit(centres, peaks, 1)[0])


def expansion_fit(
    backend: ModelBackend,
    phi: FourierObservable,
    x: Any,
    records: Sequence[ResonanceRecord],
    T_grid: Optional[Sequence[float]] = None,
    epsilon: float = 0.25,
    compare_epsilon: Optional[float] = None,
    eps_prime: float = 0.0,
    matrix: Optional[Any] = None,
    blocks: int = 4,
) -> ExpansionFit:
    """
    Fit gamma_x(phi, T) against gamma_x(D_h, T) mu(phi) plus the sub-leading resonance terms
    T^(lambda/h) (log T)^(j-1) c(T, x) O(phi) with
    c = T^(-lambda/h) max(1, |log T|^(1-j)) gamma_{w,x}(D).
    """
    if not records:
        raise DependencyError("Expansion fit needs at least the leading resonance record")
    for record in records:
        if record.right is None or record.left is None or record.K is None:
            raise DependencyError(
                f"Resonance {record.value:.6g} carries no projector data", stage="expansion_fit"
            )
    if T_grid is None:
        T_grid = np.geomspace(np.e, 1e4, 40)
    T_grid = np.asarray(T_grid, dtype=float)
    if np.any(T_grid < np.e - 1e-12):
        raise InvalidParameterError("Expansion fits are taken over T >= e")
    h = float(backend.topological_entropy())
    dim = phi.dim

    leading = records[0]
    K = int(leading.K)
    phi_vec = phi.to_vector(K)
    constant = np.zeros_like(phi_vec)
    constant[int(mode_index(np.zeros(dim, dtype=np.int64), K)[0])] = 1.0
    O_h, D_h = leading.left[:, 0], leading.right[:, 0]
    normalization = complex(np.vdot(O_h, constant))
    mean = complex(np.vdot(O_h, phi_vec)) / normalization
    density = _as_observable(D_h * normalization, K, dim)

    gamma = np.array([horocycle_integral(backend, phi, x, T) for T in T_grid])
    recon = np.array([horocycle_integral(backend, density, x, T) for T in T_grid]) * mean

    terms: List[ExpansionTerm] = []
    differences: List[float] = []
    if len(records) > 1:
        families = [cutoff_family(backend, T, x, epsilon) for T in T_grid]
        others = (
            [cutoff_family(backend, T, x, compare_epsilon) for T in T_grid]
            if compare_epsilon is not None
            else None
        )
        logT = np.log(T_grid)
        for r_index, record in enumerate(records[1:], start=1):
            levels = _jordan_levels(record, matrix)
            lam = record.value
            for col, level in enumerate(levels):
                D = _as_observable(record.right[:, col], int(record.K), dim)
                functional = complex(np.vdot(record.left[:, col], phi.to_vector(int(record.K))))
                scale = T_grid ** (-lam / h) * np.maximum(1.0, np.abs(logT) ** (1 - level))
                paired = np.array([_piecewise_window_integral(backend, f, D) for f in families])
                coefficients = scale * paired
                recon = recon + paired * functional
                if others is not None:
                    alt = np.array([_piecewise_window_integral(backend, f, D) for f in others])
                    differences.append(float(np.max(np.abs(scale * (alt - paired)))))
                terms.append(
                    ExpansionTerm(
                        real=lam.real,
                        imag=lam.imag,
                        record=r_index,
                        column=col,
                        level=level,
                        functional_real=functional.real,
                        functional_imag=functional.imag,
                        coefficients_abs=[float(v) for v in np.abs(coefficients)],
                        coefficient_sup=float(np.max(np.abs(coefficients))),
                    )
                )

    residual = np.abs(gamma - recon)
    exponent = envelope_exponent(T_grid, residual, blocks)
    statistic = float(np.max(T_grid**eps_prime * np.abs(gamma / T_grid - mean)))
    logger.info(
        f"Expansion fit on {backend.kind}: {len(terms)} sub-leading terms, "
        f"residual exponent {exponent:.4f}, mu(phi)={mean:.6g}"
    )
    return ExpansionFit(
        T=[float(t) for t in T_grid],
        gamma_real=[float(v) for v in gamma.real],
        gamma_imag=[float(v) for v in gamma.imag],
        reconstruction_real=[float(v) for v in recon.real],
        reconstruction_imag=[float(v) for v in recon.imag],
        residual=[float(v) for v in residual],
        terms=terms,
        leading=leading.real,
        mean_real=mean.real,
        mean_imag=mean.imag,
        residual_exponent=exponent,
        eps_prime=eps_prime,
        polynomial_statistic=statistic,
        epsilon=epsilon,
        cutoff_difference=max(differences) if differences else None,
    )
