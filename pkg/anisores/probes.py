from __future__ import annotations

from typing import List, Literal, Optional, Sequence

import numpy as np

from anisores.backends import ModelBackend
from anisores.dynamics_models import CocycleWeight, lambda_min_estimate
from anisores.exceptions import InvalidParameterError
from anisores.logging import get_logger
from anisores.models import DolgopyatReport, GrowthReport, LasotaYorkeReport
from anisores.resonances import resonances, spectral_projector
from anisores.spectral_blocks import (
    AnisotropicIndex,
    ConeEnsemble,
    DyadicPartition,
    check_lasota_yorke_indices,
    mode_weights,
)
from anisores.transfer_operator import FibreFamily, TransferMatrix, assemble_transfer

logger = get_logger("anisores.probes")


def random_states(rng: np.random.Generator, family: FibreFamily, count: int) -> List[np.ndarray]:
    shape = (family.q, family.size)
    return [rng.normal(size=shape) + 1j * rng.normal(size=shape) for _ in range(count)]


def remove_resonances(family: FibreFamily, states: Sequence[np.ndarray], above: float):
    """Project out every base resonance with Re lambda > above (acts along the base axis)."""
    records = resonances(family.step, region_delta=above, count=family.size)
    if not records:
        return list(states), 0
    P = sum(spectral_projector(r).dense() for r in records)
    cleaned = [F - F @ P.T for F in states]
    logger.debug(f"Removed {len(records)} resonances above {above:.6f}")
    return cleaned, len(records)


def resolvent_power_norms(
    family: FibreFamily,
    F: np.ndarray,
    z: complex,
    n_max: int,
    weights: Optional[np.ndarray] = None,
    method: Literal["fibre", "laguerre"] = "fibre",
) -> List[float]:
    """||R_z^n F|| for n = 1..n_max by repeated application."""
    norms = []
    state = F
    for _ in range(n_max):
        state = family.resolvent_apply(state, z, method=method)
        norms.append(family.norm(state, weights))
    return norms


def lasota_yorke_probe(
    family: FibreFamily,
    partition: DyadicPartition,
    ensemble: ConeEnsemble,
    strong: AnisotropicIndex,
    weak: AnisotropicIndex,
    z: complex,
    lambda_min: float,
    n_max: int = 20,
    samples: Optional[Sequence[np.ndarray]] = None,
    sample_count: int = 6,
    rng: Optional[np.random.Generator] = None,
    remove_above: Optional[float] = None,
    method: Literal["fibre", "laguerre"] = "fibre",
    slack: float = 0.10,
) -> LasotaYorkeReport:
    """
    Fit the smallest C in
    ||R^(n+1) phi|| <= C (|z| + 1 + (Re z - A0)) / (Re z - A0)^(n+1) ||phi||_weak
                       + (C n / (Re z - lambda_min) + C) / ((Re z - A0)(Re z - lambda_min)^n)
    over unit samples and n < n_max, then compare the n-th root asymptote of the
    resolvent powers (resonances above ``remove_above`` projected out) to 1 / (Re z - lambda_min).
    """
    check_lasota_yorke_indices(strong, weak)
    A0 = family.growth_bound()
    gap = float(np.real(z)) - A0
    if gap <= 0:
        raise InvalidParameterError(
            f"Re z = {np.real(z):.6g} must exceed the growth bound A0 = {A0:.6g}",
            stage="lasota_yorke_probe",
        )
    bound = 1.0 / (float(np.real(z)) - lambda_min)
    modes = family.step.modes
    w_strong = mode_weights(partition, ensemble, strong, modes)
    w_weak = mode_weights(partition, ensemble, weak, modes)
    if samples is None:
        samples = random_states(rng or np.random.default_rng(0), family, sample_count)
    samples = [F / family.norm(F, w_strong) for F in samples]

    constant = 0.0
    single = 0.0
    for F in samples:
        norms = resolvent_power_norms(family, F, z, n_max + 1, w_strong, method)
        weak_norm = family.norm(F, w_weak)
        single = max(single, norms[0] * gap)
        for n in range(1, n_max + 1):
            first = (abs(z) + 1.0 + gap) / gap ** (n + 1) * weak_norm
            second = (n * bound + 1.0) * bound**n / gap
            constant = max(constant, norms[n] / (first + second))

    cutoff = lambda_min if remove_above is None else remove_above
    cleaned, removed = remove_resonances(family, samples, cutoff)
    raw = []
    for F in cleaned:
        size = family.norm(F, w_strong)
        if size < 1e-300:
            continue
        norms = resolvent_power_norms(family, F, z, n_max, w_strong, method)
        raw.append(float((max(norms[-1], 0.0) / size) ** (1.0 / n_max)))
    asymptote = max(raw) if raw else 0.0
    passes = asymptote <= bound * (1.0 + slack)
    logger.info(
        f"Lasota-Yorke probe z={z} A0={A0:.6f} C={constant:.4e} asymptote={asymptote:.6f} "
        f"bound={bound:.6f} removed={removed} passes={passes}"
    )
    return LasotaYorkeReport(
        z_real=float(np.real(z)),
        z_imag=float(np.imag(z)),
        growth_bound=A0,
        lambda_min=lambda_min,
        constant=constant,
        single_step_constant=single,
        asymptote=asymptote,
        raw_asymptotes=raw,
        bound=bound,
        passes=passes,
    )


def eigenvector_asymptote(
    family: FibreFamily, vector: np.ndarray, mu: complex, z: complex, n_max: int = 20
) -> float:
    """n-th root of ||R_z^n D|| / ||D|| for the fibre eigenfunction over a base eigenvector."""
    D = family.exponential_state(vector, family.eigen_rate(mu))
    norms = resolvent_power_norms(family, D, z, n_max)
    return float((norms[-1] / family.norm(D)) ** (1.0 / n_max))


def _power_ratios(matrix: TransferMatrix, samples, weights, alphas) -> np.ndarray:
    steps = int(max(alphas))
    wanted = {int(a) for a in alphas}
    table = {}
    states = [np.asarray(v, dtype=complex) for v in samples]
    sizes = [np.sqrt(np.sum(weights * np.abs(v) ** 2)) for v in states]
    for n in range(1, steps + 1):
        states = [matrix.apply(v) for v in states]
        if n in wanted:
            table[n] = [
                np.sqrt(np.sum(weights * np.abs(v) ** 2)) / s for v, s in zip(states, sizes)
            ]
    return np.array([table[int(a)] for a in alphas])


def transfer_growth_probe(
    backend: ModelBackend,
    weight: CocycleWeight,
    partition: DyadicPartition,
    ensemble: ConeEnsemble,
    index: AnisotropicIndex,
    alphas: Optional[Sequence[int]] = None,
    samples: Optional[Sequence[np.ndarray]] = None,
    K: int = 16,
    sample_count: int = 6,
    rng: Optional[np.random.Generator] = None,
    matrix: Optional[TransferMatrix] = None,
) -> GrowthReport:
    """
    Growth of ||L_alpha phi|| / ||phi|| in the truncated (s, t, q) norm.
    The sup over samples is fitted to C e^(A alpha); the closed-form second term
    sup phi_alpha |det Dg_-alpha|^(-1/p) lambda^(t,s,alpha) is compared to
    (alpha + 1) e^(lambda_min alpha).
    """
    alphas = [int(a) for a in (alphas if alphas is not None else range(1, 11))]
    if matrix is None:
        matrix = assemble_transfer(backend, weight, 1, K)
    weights = mode_weights(partition, ensemble, index, matrix.modes)
    if samples is None:
        rng = rng or np.random.default_rng(0)
        constant_mode = np.zeros(matrix.size, dtype=complex)
        constant_mode[matrix.size // 2] = 1.0
        samples = [constant_mode] + [
            rng.normal(size=matrix.size) + 1j * rng.normal(size=matrix.size)
            for _ in range(sample_count)
        ]
    ratios = _power_ratios(matrix, samples, weights, alphas)
    log_ratios = np.log(np.max(ratios, axis=1))
    slope, intercept = np.polyfit(alphas, log_ratios, 1)
    h_top = float(backend.topological_entropy())

    envelope_min = envelope_max = None
    if index.s < 0 < index.t:
        fit = lambda_min_estimate(backend, weight, index.s, index.t, index.p, alphas=alphas)
        envelope = np.array(
            [(a + 1.0) * np.exp(fit.value * a) for a in alphas], dtype=float
        )
        log_r = np.asarray(fit.log_values) - np.log(envelope)
        centre = 0.5 * (log_r.max() + log_r.min())
        envelope_min = float(np.exp(log_r.min() - centre))
        envelope_max = float(np.exp(log_r.max() - centre))

    global_constant = None
    if getattr(weight, "kind", None) == "horocycle":
        global_constant = float(
            np.max(np.max(ratios, axis=1) * np.exp(-h_top * np.asarray(alphas, dtype=float)))
        )
    logger.info(
        f"Transfer growth rate {slope:.6f} (h_top {h_top:.6f}) on {backend.kind} K={matrix.K}"
    )
    return GrowthReport(
        rate=float(slope),
        constant=float(np.exp(intercept)),
        h_top=h_top,
        alphas=[float(a) for a in alphas],
        log_ratios=[float(v) for v in log_ratios],
        envelope_ratio_min=envelope_min,
        envelope_ratio_max=envelope_max,
        global_constant=global_constant,
    )


def dolgopyat_probe(
    family: FibreFamily,
    a: float,
    b: float,
    b_max: float,
    gamma: float,
    delta: float,
    lambda_max: Optional[float] = None,
    points: int = 8,
    samples: Optional[Sequence[np.ndarray]] = None,
    sample_count: int = 4,
    rng: Optional[np.random.Generator] = None,
    remove_leading: bool = True,
    weights: Optional[np.ndarray] = None,
) -> DolgopyatReport:
    """
    ||R^n_(z + lambda_max)|| on the sample span with n = max(1, ceil(gamma log |Im z|)),
    Re z = a and |Im z| log-spaced on [b, b_max]. Both C^n and C normalizations are reported.
    """
    if a <= 0:
        raise InvalidParameterError(f"Dolgopyat probe needs Re z = a > 0, got {a}")
    if not 1.0 < b < b_max:
        raise InvalidParameterError(f"Need 1 < b < b_max, got b={b}, b_max={b_max}")
    if lambda_max is None:
        records = resonances(family.step, count=1)
        lambda_max = records[0].real if records else 0.0
    if samples is None:
        samples = random_states(rng or np.random.default_rng(0), family, sample_count)
    if remove_leading:
        samples, _ = remove_resonances(family, samples, lambda_max - 1e-9)
    samples = [F for F in samples if family.norm(F, weights) > 1e-300]

    imag_parts = np.geomspace(b, b_max, points)
    base = abs(a + (lambda_max - delta))
    powers: List[int] = []
    norms: List[float] = []
    c_power: List[float] = []
    c_plain: List[float] = []
    for y in imag_parts:
        n = max(1, int(np.ceil(gamma * np.log(y))))
        z = complex(a + lambda_max, y)
        worst = 0.0
        for F in samples:
            state = F
            for _ in range(n):
                state = family.resolvent_apply(state, z)
            worst = max(worst, family.norm(state, weights) / family.norm(F, weights))
        powers.append(n)
        norms.append(worst)
        c_power.append(float(worst ** (1.0 / n) * base))
        c_plain.append(float(worst * base**n))

    half = len(imag_parts) // 2
    lower = max(c_power[:half]) if half else 0.0
    upper = max(c_power[half:])
    uniform = upper <= 1.1 * lower if half else True
    logger.info(
        f"Dolgopyat probe a={a} delta={delta} lambda_max={lambda_max:.6f} "
        f"C range [{min(c_power):.3e}, {max(c_power):.3e}] uniform={uniform}"
    )
    return DolgopyatReport(
        a=a,
        delta=delta,
        lambda_max=float(lambda_max),
        imag_parts=[float(v) for v in imag_parts],
        powers=powers,
        norms=norms,
        constant_power=c_power,
        constant_plain=c_plain,
        uniform=uniform,
    )
