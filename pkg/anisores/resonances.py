from __future__ import annotations

from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linear_sum_assignment
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from anisores.backends.base import GOLDEN
from anisores.exceptions import ConditioningError
from anisores.logging import get_logger
from anisores.transfer_operator import FibreFamily, TransferMatrix

logger = get_logger("anisores.resonances")

DENSE_LIMIT = 33**2
CLUSTER_TOL = 1e-5
RANK_TOL = 1e-7
CONDITION_LIMIT = 1e8


class ResonanceRecord(BaseModel):
    """One resonance lambda with its generalized eigenspace and dual functionals."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    real: float = Field(..., description="Re lambda in the generator plane.")
    imag: float = Field(..., description="Im lambda, principal branch |Im| <= pi / alpha.")
    mu: complex = Field(..., description="Eigenvalue of the time-alpha matrix.")
    alpha: float
    geometric_multiplicity: int
    algebraic_multiplicities: List[int] = Field(..., description="Jordan block sizes.")
    right: np.ndarray = Field(..., description="Generalized eigenvectors D, columns.")
    left: np.ndarray = Field(..., description="Dual functionals O with O^H D = I, columns.")
    K: Optional[int] = None
    stability: Optional[float] = Field(None, description="Displacement under K -> K + 8.")
    stable: Optional[bool] = None

    @property
    def value(self) -> complex:
        return complex(self.real, self.imag)

    @property
    def multiplicity(self) -> int:
        return int(sum(self.algebraic_multiplicities))

    def biorthogonality_defect(self) -> float:
        G = self.left.conj().T @ self.right
        return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def _as_array(source: Union[TransferMatrix, np.ndarray, Any]) -> Tuple[Any, float, Optional[int]]:
    if isinstance(source, TransferMatrix):
        return source.matrix, source.alpha, source.K
    return source, 1.0, None


def _cluster(values: np.ndarray, tol: float) -> List[np.ndarray]:
    order = np.argsort(-np.abs(values))
    clusters: List[List[int]] = []
    for i in order:
        for cluster in clusters:
            if abs(values[i] - values[cluster[0]]) <= tol * max(1.0, abs(values[cluster[0]])):
                cluster.append(i)
                break
        else:
            clusters.append([i])
    return [np.array(c) for c in clusters]


def jordan_structure(M: np.ndarray, mu: complex, size: int, tol: float = RANK_TOL) -> List[int]:
    """Jordan block sizes of M at mu from ranks of (M - mu)^j."""
    n = M.shape[0]
    shifted = M - mu * np.eye(n)
    nullities = [0]
    power = np.eye(n, dtype=complex)
    for _ in range(size):
        power = shifted @ power
        singular = scipy.linalg.svdvals(power)
        scale = max(singular[0], 1.0)
        nullities.append(int(np.sum(singular <= tol * scale)))
        if nullities[-1] == nullities[-2]:
            break
    # Number of blocks of size >= j is nullity_j - nullity_(j-1).
    at_least = [nullities[j] - nullities[j - 1] for j in range(1, len(nullities))]
    sizes = []
    for j in range(len(at_least)):
        exactly = at_least[j] - (at_least[j + 1] if j + 1 < len(at_least) else 0)
        sizes.extend([j + 1] * exactly)
    return sorted(sizes, reverse=True) or [1]


def _biorthogonalize(right: np.ndarray, left: np.ndarray) -> np.ndarray:
    G = left.conj().T @ right
    condition = float(np.linalg.cond(G))
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise ConditioningError(
            f"Biorthogonalization is ill-conditioned (cond={condition:.3e})",
            condition=condition,
            stage="resonances",
        )
    return left @ np.linalg.inv(G).conj().T


def _generator_value(mu: complex, alpha: float) -> complex:
    return complex(np.log(complex(mu)) / alpha)


def _dense_records(
    M: np.ndarray, alpha: float, K: Optional[int], delta: Optional[float], count: int
) -> List[ResonanceRecord]:
    values = scipy.linalg.eigvals(M)
    nonzero = values[np.abs(values) > 1e-300]
    records = []
    for cluster in _cluster(nonzero, CLUSTER_TOL):
        mu = complex(np.mean(nonzero[cluster]))
        lam = _generator_value(mu, alpha)
        if delta is not None and lam.real <= delta:
            continue
        sizes = jordan_structure(M, mu, len(cluster))
        m = int(sum(sizes))
        power = np.linalg.matrix_power(M - mu * np.eye(M.shape[0]), max(sizes))
        right = scipy.linalg.null_space(power, rcond=RANK_TOL)[:, :m]
        left = scipy.linalg.null_space(power.conj().T, rcond=RANK_TOL)[:, :m]
        if right.shape[1] != left.shape[1] or right.shape[1] == 0:
            logger.warning(f"Generalized eigenspace at mu={mu:.6g} is numerically degenerate")
            continue
        left = _biorthogonalize(right, left)
        records.append(
            ResonanceRecord(
                real=lam.real,
                imag=lam.imag,
                mu=mu,
                alpha=alpha,
                geometric_multiplicity=len(sizes),
                algebraic_multiplicities=sizes,
                right=right,
                left=left,
                K=K,
            )
        )
        if len(records) >= count:
            break
    return records


def _arnoldi(M: Any, count: int, maxiter: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
    k = min(count, M.shape[0] - 2)
    try:
        return eigs(M, k=k, which="LM", maxiter=maxiter)
    except ArpackNoConvergence as exc:
        logger.warning(f"Arnoldi converged for {len(exc.eigenvalues)} of {k} eigenvalues")
        return exc.eigenvalues, exc.eigenvectors


def _invariant_basis(
    M: Any, ritz: np.ndarray, width: int, iterations: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orthonormal Q of ``width`` columns with M Q ~ Q H, H = Q^H M Q.

    Ritz vectors seed an orthogonal iteration. Near-parallel Ritz vectors of a defective
    eigenvalue still span its generalized eigenspace once the iteration has settled.
    """
    n = M.shape[0]
    rng = np.random.default_rng(0)
    pad = max(width - ritz.shape[1], 0)
    seed = np.hstack([ritz, rng.standard_normal((n, pad))]).astype(complex)
    Q, _ = np.linalg.qr(seed[:, :width])
    for _ in range(iterations):
        Z = np.asarray(M @ Q)
        if np.linalg.norm(Z - Q @ (Q.conj().T @ Z)) <= 1e-13 * max(np.linalg.norm(Z), 1.0):
            break
        Q, _ = np.linalg.qr(Z)
    return Q, Q.conj().T @ np.asarray(M @ Q)


def _sparse_records(
    M: Any, alpha: float, K: Optional[int], delta: Optional[float], count: int, restarts: int
) -> List[ResonanceRecord]:
    n = M.shape[0]
    maxiter = restarts * n
    width = min(2 * count + 4, n - 2)
    iterations = 25 * restarts
    _, ritz = _arnoldi(M, count + 2, maxiter)
    adjoint = M.conj().T
    if sp.issparse(M):
        adjoint = sp.csr_matrix(adjoint)
    _, ritz_left = _arnoldi(adjoint, count + 2, maxiter)

    Q, H = _invariant_basis(M, ritz, width, iterations)
    Q_left, H_left = _invariant_basis(adjoint, ritz_left, width, iterations)
    records = []
    for projected in _dense_records(H, alpha, K, delta, count):
        mu = projected.mu
        m = projected.multiplicity
        D = Q @ projected.right
        shifted = H_left - np.conj(mu) * np.eye(H_left.shape[0])
        power = np.linalg.matrix_power(shifted, max(projected.algebraic_multiplicities))
        dual = scipy.linalg.null_space(power, rcond=RANK_TOL)
        if dual.shape[1] != m:
            logger.warning(f"No matching left eigenspace for mu={mu:.6g}")
            continue
        O = _biorthogonalize(D, Q_left @ dual)
        records.append(projected.model_copy(update={"right": D, "left": O}))
        if len(records) >= count:
            break
    return records


def resonances(
    source: Union[TransferMatrix, np.ndarray],
    region_delta: Optional[float] = None,
    count: int = 8,
    refined: Optional[Union[TransferMatrix, np.ndarray]] = None,
    stability_tol: float = 1e-3,
    restarts: int = 8,
) -> List[ResonanceRecord]:
    """
    Leading resonances with Re lambda > region_delta, ordered by |mu|.
    With ``refined`` (the K + 8 truncation) every record gets a stability score from a
    minimal-distance matching of the two spectra.
    """
    M, alpha, K = _as_array(source)
    size = M.shape[0]
    if size <= DENSE_LIMIT:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=complex)
        logger.debug(f"Dense eigendecomposition of {size}x{size} matrix")
        records = _dense_records(dense, alpha, K, region_delta, count)
    else:
        logger.debug(f"Arnoldi on {size}x{size} matrix with {restarts} restarts")
        records = _sparse_records(M, alpha, K, region_delta, count, restarts)
    if not records:
        logger.info(f"No resonance with Re lambda > {region_delta}")
        return records
    if refined is not None:
        records = score_stability(records, refined, stability_tol)
    logger.info(
        f"Extracted {len(records)} resonances; leading {records[0].real:.10f}"
        f"{records[0].imag:+.10f}i"
    )
    return records


def leading_eigenvalues(source: Union[TransferMatrix, np.ndarray], count: int) -> np.ndarray:
    """Generator-plane eigenvalues of largest modulus (no eigenspace data)."""
    M, alpha, _ = _as_array(source)
    if M.shape[0] <= DENSE_LIMIT:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=complex)
        mus = scipy.linalg.eigvals(dense)
    else:
        mus, _ = _arnoldi(M, count, None)
    mus = mus[np.argsort(-np.abs(mus))][:count]
    mus = mus[np.abs(mus) > 1e-300]
    return np.log(mus.astype(complex)) / alpha


def score_stability(
    records: Sequence[ResonanceRecord],
    refined: Union[TransferMatrix, np.ndarray],
    stability_tol: float = 1e-3,
) -> List[ResonanceRecord]:
    values = np.array([r.value for r in records])
    candidates = leading_eigenvalues(refined, max(2 * len(records), len(records) + 4))
    cost = np.abs(values[:, None] - candidates[None, :])
    rows, cols = linear_sum_assignment(cost)
    scored = list(records)
    for i, j in zip(rows, cols):
        score = float(cost[i, j])
        scored[i] = records[i].model_copy(
            update={"stability": score, "stable": score <= stability_tol}
        )
        if score > stability_tol:
            logger.warning(
                f"Resonance {records[i].value:.6g} moved by {score:.3e} under refinement"
            )
    return scored


class SpectralProjector:
    """Rank-m projector Pi = D O^H onto one generalized eigenspace."""

    def __init__(self, record: ResonanceRecord):
        self.record = record
        self.right = record.right
        self.left = record.left
        defect = record.biorthogonality_defect()
        if defect > 1e-8:
            raise ConditioningError(
                f"Record violates biorthogonality by {defect:.3e}", condition=defect
            )

    @property
    def rank(self) -> int:
        return int(self.right.shape[1])

    def apply(self, vec: Any) -> np.ndarray:
        return self.right @ (self.left.conj().T @ np.asarray(vec, dtype=complex))

    def functionals(self, vec: Any) -> np.ndarray:
        """Pairings O_j(vec)."""
        return self.left.conj().T @ np.asarray(vec, dtype=complex)

    def dense(self) -> np.ndarray:
        return self.right @ self.left.conj().T

    def nilpotent(self, M: Any) -> np.ndarray:
        """N = (M - mu) Pi for the time-alpha matrix."""
        M = M.matrix if isinstance(M, TransferMatrix) else M
        P = self.dense()
        return M @ P - self.record.mu * P

    def generator_nilpotent(self, M: Any) -> np.ndarray:
        """Nilpotent part of the generator: log(1 + N / mu) / alpha as a finite series."""
        N = np.asarray(self.nilpotent(M)) / self.record.mu
        total = np.zeros_like(N)
        power = np.eye(N.shape[0], dtype=complex)
        for j in range(1, self.record.multiplicity + 1):
            power = power @ N
            total += (-1) ** (j + 1) * power / j
        return total / self.record.alpha


def spectral_projector(record: ResonanceRecord) -> SpectralProjector:
    return SpectralProjector(record)


class BranchRecord(BaseModel):
    """Generator value fixed by spectra at two incommensurate times."""

    model_config = ConfigDict(frozen=True)

    real: float
    imag: float
    winding: int = Field(..., description="j in log(mu) / alpha + 2 pi i j / alpha.")
    mismatch: float = Field(..., description="Relative distance to the other time's spectrum.")

    @property
    def value(self) -> complex:
        return complex(self.real, self.imag)


def resolve_branches(
    values_a: Any, alpha_a: float, values_b: Any, alpha_b: float, windings: int = 8
) -> List[BranchRecord]:
    """
    For every time-alpha_b eigenvalue, the winding of log / alpha_b whose exponential at
    alpha_a lands closest to a time-alpha_a eigenvalue. An irrational ratio of the two
    times separates branches that alias at either one.
    """
    values_a = np.asarray(values_a, dtype=complex)
    values_a = values_a[np.abs(values_a) > 1e-300]
    records = []
    for mu in np.asarray(values_b, dtype=complex):
        if abs(mu) <= 1e-300:
            continue
        base = _generator_value(mu, alpha_b)
        best = (np.inf, np.inf)
        winding, value = 0, base
        for j in range(-windings, windings + 1):
            lam = base + 2j * np.pi * j / alpha_b
            predicted = np.exp(lam * alpha_a)
            key = (float(np.min(np.abs(values_a - predicted) / np.abs(values_a))), abs(lam.imag))
            if key < best:
                best, winding, value = key, j, lam
        records.append(
            BranchRecord(real=value.real, imag=value.imag, winding=winding, mismatch=best[0])
        )
    return records


def fibre_spectrum(family: FibreFamily, alpha: float, count: int) -> np.ndarray:
    """Eigenvalues of largest modulus of the fibre time-alpha operator."""
    shape = (family.q, family.size)

    def matvec(v: np.ndarray) -> np.ndarray:
        return family.apply(np.asarray(v, dtype=complex).reshape(shape), alpha).ravel()

    operator = LinearOperator((shape[0] * shape[1],) * 2, matvec=matvec, dtype=complex)
    values, _ = _arnoldi(operator, count, None)
    return values[np.argsort(-np.abs(values))]


def generator_branches(
    family: FibreFamily, alpha: float, count: int = 8, windings: int = 8
) -> List[BranchRecord]:
    """Leading generator values of the fibre semigroup, cross-checked at alpha and alpha * phi."""
    second = alpha * GOLDEN
    values_a = fibre_spectrum(family, alpha, count)
    values_b = fibre_spectrum(family, second, max(2 * count + 4, family.q + 2))
    records = resolve_branches(values_a, alpha, values_b, second, windings)
    worst = max((r.mismatch for r in records), default=0.0)
    logger.info(
        f"Resolved {len(records)} generator branches at alpha={alpha} and {second:.6f}; "
        f"worst mismatch {worst:.3e}"
    )
    return records
