from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from anisores import __version__
from anisores.backends import LAMBDA_S, LinearCat, ModelBackend, Suspension
from anisores.cache_backends import MemoryCache
from anisores.config import AnisoresConfig, RunConfig
from anisores.dynamics_models import build_backend, lambda_min_estimate
from anisores.exceptions import (
    AnisoresError,
    DependencyError,
    InvalidParameterError,
    UnknownSeriesError,
)
from anisores.exporter import Exporter, schema_header
from anisores.horocycle_expansion import cutoff_family, expansion_fit, local_decomposition_check
from anisores.horocycle_lab import (
    SmoothWindow,
    linear_horocycle_integral,
    renorm_identity_check,
    sample_points,
    tau_identity_suite,
)
from anisores.logging import get_logger, run_context
from anisores.models import Manifest, Verdict
from anisores.observables import ProductObservable, mode_index, random_trig_polynomial
from anisores.oscillatory_quadrature import (
    PhasePair,
    bump,
    ibp_decay,
    ibp_iterate,
    mollifier_sweep,
)
from anisores.probes import (
    dolgopyat_probe,
    eigenvector_asymptote,
    lasota_yorke_probe,
    random_states,
    transfer_growth_probe,
)
from anisores.resonances import ResonanceRecord, generator_branches, resonances
from anisores.spectral_blocks import (
    AnisotropicIndex,
    cone_expansion_bound,
    cone_hyperbolicity_check,
    cone_inclusion_margin,
    ensemble_from_config,
    kernel_l1_norms,
    partition_from_config,
    torus_grid,
)
from anisores.transfer_operator import (
    TransferMatrix,
    WeightSpec,
    assemble_transfer,
    fibre_family,
    resolvent_identity_defect,
)
from anisores.validators import config_hash, serialize_config

logger = get_logger("anisores.pipeline")

PARTITION_SAMPLES = 10_000
CONE_POINTS = 4
CONE_GAMMA = 0.1
CONE_ALPHAS = (1, 2, 3)
IDENTITY_ALPHAS = (0, 1, 2, 4)
CUTOFF_LENGTHS = (10.0, 100.0, 1000.0)
IBP_ORDERS = (1, 2, 3)
IBP_SCALES = (4.0, 8.0, 16.0, 32.0, 64.0)
HOLDER_EXPONENT = 0.5
MOLLIFIER_SCALES = tuple(np.geomspace(0.004, 0.04, 6))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class Series:
    x: List[float]
    y: List[float]
    x_label: str
    y_label: str
    log: bool = False


class ResultStore:
    """
    Output directory of one run: ``manifest.json``, the serialized config, CSV/JSON tables
    and in-memory plot series. The manifest is written before any artifact and again after
    every stage, so an interrupted or failed run still shows which stage broke.
    """

    def __init__(self, directory: str | Path, config: RunConfig):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.config_hash = config_hash(config)
        self.manifest = Manifest(
            config_hash=self.config_hash,
            version=__version__,
            experiment=config.run.experiment,
            seed=config.run.seed,
            created_at=_now(),
        )
        self.series: Dict[str, Series] = {}
        self.flush()
        (self.directory / "config.ini").write_text(serialize_config(config), encoding="utf-8")

    @property
    def manifest_path(self) -> Path:
        return self.directory / "manifest.json"

    @property
    def passed(self) -> bool:
        return self.manifest.passed

    def flush(self) -> None:
        Exporter.to_json(self.manifest, self.manifest_path)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Run one pipeline stage; an AnisoresError marks it failed instead of propagating."""
        started = time.perf_counter()
        self.manifest.stages[name] = "running"
        self.flush()
        logger.info(f"Stage {name} started")
        try:
            yield
        except AnisoresError as e:
            self.manifest.stages[name] = "failed"
            self.manifest.errors[name] = f"{type(e).__name__}: {e}"
            logger.error(f"Stage {name} failed: {e}")
        else:
            self.manifest.stages[name] = "ok"
            logger.info(f"Stage {name} finished in {time.perf_counter() - started:.2f}s")
        finally:
            self.flush()

    def ok(self, name: str) -> bool:
        return self.manifest.stages.get(name) == "ok"

    def check(
        self, stage: str, metric: str, value: float, threshold: float, upper: bool = True
    ) -> Verdict:
        """Record value <= threshold (or >= with ``upper=False``) as a verdict."""
        value = float(value)
        passed = bool(np.isfinite(value)) and (value <= threshold if upper else value >= threshold)
        verdict = Verdict(
            stage=stage, metric=metric, value=value, threshold=float(threshold), passed=passed
        )
        self.manifest.verdicts.append(verdict)
        if passed:
            logger.info(f"{stage}.{metric} = {value:.6e} within {threshold:.3e}")
        else:
            logger.warning(f"{stage}.{metric} = {value:.6e} misses {threshold:.3e}")
        return verdict

    def _register(self, name: str) -> Path:
        if name not in self.manifest.artifacts:
            self.manifest.artifacts.append(name)
        return self.directory / name

    def write_csv(self, name: str, rows: Any) -> Path:
        path = self._register(name)
        Exporter.to_csv(rows, path, self.config_hash)
        return path

    def write_json(self, name: str, data: Any) -> Path:
        path = self._register(name)
        Exporter.to_json({"config_hash": self.config_hash, "data": data}, path)
        return path

    def add_series(
        self,
        name: str,
        x: Sequence[float],
        y: Sequence[float],
        labels: Tuple[str, str],
        log: bool = False,
    ) -> None:
        order = np.argsort(np.asarray(x, dtype=float), kind="stable")
        self.series[name] = Series(
            x=[float(x[i]) for i in order],
            y=[float(y[i]) for i in order],
            x_label=labels[0],
            y_label=labels[1],
            log=log,
        )

    def finish(self) -> None:
        self.write_csv("verdicts.csv", self.manifest.verdicts)
        self.manifest.finished_at = _now()
        self.flush()


@dataclass
class RunContext:
    config: RunConfig
    rng: np.random.Generator
    cache: MemoryCache
    threads: int = 1
    backend: Optional[ModelBackend] = None

    @property
    def tolerances(self):
        return self.config.tolerances

    def weight(self) -> WeightSpec:
        t = self.config.truncation
        return WeightSpec(kind=t.weight, constant=t.constant)

    def transfer(self, K: int, alpha: float = 1.0) -> TransferMatrix:
        """Time-alpha matrix; the suspension contributes its base step."""
        if isinstance(self.backend, Suspension):
            return fibre_family(
                self.backend, self.weight(), K, workers=self.threads, cache=self.cache
            ).step
        return assemble_transfer(
            self.backend, self.weight(), alpha, K, workers=self.threads, cache=self.cache
        )

    def family(self):
        r = self.config.resolvent
        return fibre_family(
            self.backend,
            self.weight(),
            self.config.truncation.K,
            nodes=r.fibre_nodes,
            rate=r.fibre_rate,
            workers=self.threads,
            cache=self.cache,
        )


def _partition_check(store: ResultStore, ctx: RunContext) -> None:
    config = ctx.config
    tol = ctx.tolerances.partition
    with store.stage("partition"):
        partition = partition_from_config(config.partition)
        ensemble = ensemble_from_config(config.cones)
        reach = 2.0**partition.max_level
        radii = reach * np.sqrt(ctx.rng.random(PARTITION_SAMPLES))
        angles = 2.0 * np.pi * ctx.rng.random(PARTITION_SAMPLES)
        xi = radii[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)

        psi = partition.psi_all(xi)
        store.check("partition", "sum_defect", np.max(np.abs(psi.sum(axis=0) - 1.0)), tol)
        phi = ensemble.phi_all(xi)
        store.check("partition", "cone_sum_defect", np.max(np.abs(phi.sum(axis=0) - 1.0)), tol)

        r = partition.frequency_norm(xi)
        kernels = kernel_l1_norms(partition, ensemble, config.partition.grid)
        rows = []
        worst_support = worst_similarity = 0.0
        for n in range(partition.max_level + 1):
            lower = 0.0 if n == 0 else 2.0 ** (n - 1)
            outside = (r < lower) | (r > 2.0 ** (n + 1))
            support = float(np.max(np.abs(psi[n][outside]))) if outside.any() else 0.0
            similarity = 0.0
            if n >= 1:
                similarity = float(np.max(np.abs(psi[n] - partition.psi(1, 2.0 ** (1 - n) * xi))))
            worst_support = max(worst_support, support)
            worst_similarity = max(worst_similarity, similarity)
            rows.append(
                {
                    "level": n,
                    "support_violation": support,
                    "similarity_defect": similarity,
                    "kernel_l1_minus": kernels["-"][n],
                    "kernel_l1_plus": kernels["+"][n],
                    "kernel_l1_zero": kernels["0"][n],
                }
            )
        store.check("partition", "support_violation", worst_support, tol)
        store.check("partition", "similarity_defect", worst_similarity, tol)
        store.write_csv("partition.csv", rows)


def _cones(store: ResultStore, ctx: RunContext) -> None:
    backend = ctx.backend
    tol = ctx.tolerances
    ensemble = ensemble_from_config(ctx.config.cones)
    if backend.dim == 2:
        with store.stage("certificate"):
            certificate = cone_hyperbolicity_check(
                backend.differential(torus_grid(16), -1), ensemble
            )
            store.check(
                "certificate",
                "angular_margin",
                min(certificate.margin_minus, certificate.margin_zero),
                tol.margin,
                upper=False,
            )
    with store.stage("cone-bounds"):
        C, theta = backend.anosov_constants()
        points = sample_points(backend, ctx.rng, CONE_POINTS)
        rows = []
        inclusion = np.inf
        expansion = np.inf
        for alpha in CONE_ALPHAS:
            gamma_prime = 2.0 * C**2 * theta**alpha * CONE_GAMMA
            if gamma_prime >= 0.95:
                logger.warning(f"Skipping alpha={alpha}: gamma' = {gamma_prime:.3f} leaves no room")
                continue
            for x in points:
                inc = cone_inclusion_margin(backend, x, alpha, CONE_GAMMA, gamma_prime)
                bound = cone_expansion_bound(backend, x, alpha, CONE_GAMMA, gamma_prime)
                inclusion = min(inclusion, inc.margin_minus, inc.margin_plus)
                expansion = min(expansion, bound.min_ratio / bound.bound)
                rows.append(
                    {
                        "alpha": alpha,
                        "x": " ".join(repr(float(v)) for v in x),
                        "gamma": CONE_GAMMA,
                        "gamma_prime": gamma_prime,
                        "margin_minus": inc.margin_minus,
                        "margin_plus": inc.margin_plus,
                        "min_ratio": bound.min_ratio,
                        "bound": bound.bound,
                        "conservative_bound": bound.conservative_bound,
                    }
                )
        if not rows:
            raise InvalidParameterError(
                f"No cone time step admits gamma' < 1 (C={C:.3f}, theta={theta:.3f})"
            )
        store.check("cone-bounds", "inclusion_margin", inclusion, tol.margin, upper=False)
        store.check("cone-bounds", "expansion_ratio", expansion, 1.0 - 1e-12, upper=False)
        store.write_csv("cones.csv", rows)


def _leading_checks(store: ResultStore, ctx: RunContext, matrix: TransferMatrix, records) -> None:
    """Closed-form oracles of the linear cat map under the horocycle weight."""
    tol = ctx.tolerances
    backend = ctx.backend
    h_top = float(backend.topological_entropy())
    leading = records[0]
    store.check("spectrum", "leading_real", abs(leading.real - h_top), tol.leading)
    store.check("spectrum", "leading_imag", abs(leading.imag), tol.leading)
    centre = int(mode_index(np.zeros(2, dtype=np.int64), matrix.K)[0])
    D = leading.right[:, 0]
    store.check(
        "spectrum",
        "eigenfunction_constant",
        1.0 - abs(D[centre]) / np.linalg.norm(D),
        tol.leading,
    )
    phi = random_trig_polynomial(ctx.rng, min(4, matrix.K)).to_vector(matrix.K)
    paired = matrix.apply(phi)[centre]
    expected = np.exp(h_top * matrix.alpha) * phi[centre]
    store.check("spectrum", "adjoint_relation", abs(paired - expected), tol.adjoint)


def _resonances(store: ResultStore, ctx: RunContext) -> None:
    t = ctx.config.truncation
    tol = ctx.tolerances
    with store.stage("spectrum"):
        matrix = ctx.transfer(t.K, t.alpha)
        refined = ctx.transfer(t.K + t.stability_step, t.alpha)
        records = resonances(
            matrix,
            region_delta=t.region_delta,
            count=t.count,
            refined=refined,
            stability_tol=tol.stability,
        )
        if not records:
            raise DependencyError(f"No resonance above region_delta={t.region_delta}")
        store.write_csv("resonances.csv", Exporter.resonance_rows(records))
        store.write_json("eigenvectors.json", Exporter.eigenvector_payload(records))
        store.check(
            "spectrum",
            "biorthogonality",
            max(r.biorthogonality_defect() for r in records),
            tol.biorthogonality,
        )
        displaced = [r.stability for r in records[:5] if r.stability is not None]
        if displaced:
            store.check("spectrum", "displacement", max(displaced), tol.stability)
        if isinstance(ctx.backend, Suspension):
            _branch_checks(store, ctx, records[0])
        if isinstance(ctx.backend, LinearCat) and t.weight == "horocycle":
            _leading_checks(store, ctx, matrix, records)


def _branch_checks(store: ResultStore, ctx: RunContext, leading: ResonanceRecord) -> None:
    t = ctx.config.truncation
    tol = ctx.tolerances
    branches = generator_branches(ctx.family(), t.alpha, count=t.count)
    store.write_csv(
        "generator_branches.csv",
        [{**b.model_dump(), "alpha": t.alpha} for b in branches],
    )
    matched = [b for b in branches if b.mismatch <= tol.branch]
    distance = min((abs(b.value - leading.value) for b in matched), default=np.inf)
    store.check("spectrum", "branch_leading", distance, tol.branch)


def _ly_probe(store: ResultStore, ctx: RunContext) -> None:
    config = ctx.config
    r = config.resolvent
    tol = ctx.tolerances
    backend = ctx.backend
    h_top = float(backend.topological_entropy())
    with store.stage("lasota-yorke"):
        family = ctx.family()
        partition = partition_from_config(config.partition)
        ensemble = ensemble_from_config(config.cones)
        strong = AnisotropicIndex.from_config(config.index)
        weak = AnisotropicIndex.from_config(config.index, weak=True)
        fit = lambda_min_estimate(backend, ctx.weight(), strong.s, strong.t, strong.p)
        samples = random_states(ctx.rng, family, r.samples)
        leading = resonances(family.step, count=1)
        if not leading:
            raise DependencyError("The base step has no leading eigenvalue")
        lam = leading[0]

        rows = []
        for offset in r.z_offsets:
            z = complex(h_top + offset, 0.0)
            report = lasota_yorke_probe(
                family,
                partition,
                ensemble,
                strong,
                weak,
                z,
                fit.value,
                n_max=r.n_max,
                samples=samples,
                method=r.method,
                slack=tol.ly_slack,
            )
            saturation = eigenvector_asymptote(family, lam.right[:, 0], lam.mu, z, r.n_max)
            expected = 1.0 / (z.real - lam.real)
            store.check(
                "lasota-yorke",
                f"asymptote[z={z.real:.6g}]",
                report.asymptote,
                report.bound * (1.0 + tol.ly_slack),
            )
            store.check(
                "lasota-yorke",
                f"saturation[z={z.real:.6g}]",
                abs(saturation / expected - 1.0),
                tol.saturation,
            )
            row = report.model_dump(exclude={"raw_asymptotes"})
            row["eigenvector_asymptote"] = saturation
            rows.append(row)
        store.write_csv("ly_probe.csv", rows)

        if backend.is_map:
            growth = transfer_growth_probe(
                backend,
                ctx.weight(),
                partition,
                ensemble,
                strong,
                K=config.truncation.K,
                rng=ctx.rng,
                matrix=family.step,
            )
            store.write_csv(
                "growth.csv",
                [{"alpha": a, "log_ratio": v} for a, v in zip(growth.alphas, growth.log_ratios)],
            )

    if not store.ok("lasota-yorke"):
        return
    with store.stage("resolvent"):
        z = complex(h_top + 1.0, 0.0)
        w = complex(h_top + 2.0, 0.5)
        defect = resolvent_identity_defect(family, z, w, samples[:2], method=r.method)
        store.check("resolvent", "identity_defect", defect, tol.resolvent)
        D = family.exponential_state(lam.right[:, 0], family.eigen_rate(lam.mu))
        RD = family.resolvent_apply(D, z, method=r.method)
        closed = family.norm(RD - D / (z - lam.value)) / family.norm(D)
        store.check("resolvent", "eigenfunction_defect", closed, tol.resolvent)


def _dolgopyat_probe(store: ResultStore, ctx: RunContext) -> None:
    r = ctx.config.resolvent
    with store.stage("dolgopyat"):
        report = dolgopyat_probe(
            ctx.family(),
            r.dolgopyat_a,
            r.dolgopyat_b,
            r.dolgopyat_b_max,
            r.dolgopyat_gamma,
            r.dolgopyat_delta,
            sample_count=r.samples,
            rng=ctx.rng,
        )
        half = len(report.constant_power) // 2
        lower = max(report.constant_power[:half]) if half else max(report.constant_power)
        ratio = max(report.constant_power[half:]) / lower
        store.check("dolgopyat", "uniformity_ratio", ratio, ctx.tolerances.uniformity)
        rows = [
            {"imag": y, "power": n, "norm": v, "constant_power": c, "constant_plain": p}
            for y, n, v, c, p in zip(
                report.imag_parts,
                report.powers,
                report.norms,
                report.constant_power,
                report.constant_plain,
            )
        ]
        store.write_csv("dolgopyat.csv", rows)
        store.add_series("dolgopyat", report.imag_parts, report.constant_power, ("b", "C"))


def _random_observable(ctx: RunContext):
    base = random_trig_polynomial(ctx.rng, 3)
    if ctx.backend.dim == 3:
        return ProductObservable(base=base, profile=np.ones_like)
    return base


def _tau_verify(store: ResultStore, ctx: RunContext) -> None:
    backend = ctx.backend
    tol = ctx.tolerances
    samples = ctx.config.horocycle.samples
    linear = isinstance(backend, LinearCat)
    with store.stage("identities"):
        report = tau_identity_suite(backend, ctx.rng, samples=samples)
        threshold = tol.renorm_map if linear else tol.renorm_flow
        for key, value in report.residuals.items():
            store.check("identities", key, value, threshold)
        h_top = report.h_top
        if linear:
            store.check(
                "identities",
                "growth_exponent",
                abs(report.growth_exponent - h_top),
                tol.growth_linear,
            )
        else:
            store.check(
                "identities",
                "growth_exponent",
                abs(report.growth_exponent - h_top) / h_top,
                tol.growth_relative,
            )
        store.check(
            "identities", "derivative_min", report.derivative_min, np.finfo(float).tiny, upper=False
        )
        C = tol.growth_constant
        for metric in ("growth_ratio", "inverse_ratio"):
            low = getattr(report, f"{metric}_min")
            high = getattr(report, f"{metric}_max")
            store.check("identities", f"{metric}_min", low, 1.0 / C, upper=False)
            store.check("identities", f"{metric}_max", high, C)
        if backend.is_map:
            store.check(
                "identities",
                "decay_rate",
                abs(report.decay_theta - LAMBDA_S) / LAMBDA_S,
                tol.decay_relative,
            )
        store.write_csv(
            "tau_identities.csv",
            [{"metric": k, "value": v} for k, v in report.residuals.items()]
            + [
                {"metric": "growth_exponent", "value": report.growth_exponent},
                {"metric": "decay_theta", "value": report.decay_theta},
                {"metric": "derivative_min", "value": report.derivative_min},
                {"metric": "growth_ratio_min", "value": report.growth_ratio_min},
                {"metric": "growth_ratio_max", "value": report.growth_ratio_max},
                {"metric": "inverse_ratio_min", "value": report.inverse_ratio_min},
                {"metric": "inverse_ratio_max", "value": report.inverse_ratio_max},
            ],
        )

    with store.stage("renormalization"):
        rows = []
        worst = 0.0
        for alpha in IDENTITY_ALPHAS:
            for _ in range(samples):
                x = sample_points(backend, ctx.rng, 1)[0]
                phi = _random_observable(ctx)
                length = float(ctx.rng.uniform(0.5, 2.0))
                window = SmoothWindow(a=0.0, b=length, ramp=0.25 * length)
                residual = renorm_identity_check(backend, window, x, phi, alpha)
                worst = max(worst, residual)
                rows.append({"alpha": alpha, "length": length, "residual": residual})
        store.check("renormalization", "identity_residual", worst, tol.identity)
        store.write_csv("renormalization.csv", rows)


def _horo_fit(store: ResultStore, ctx: RunContext) -> None:
    backend = ctx.backend
    config = ctx.config
    h = config.horocycle
    tol = ctx.tolerances
    if not backend.is_map:
        raise InvalidParameterError("Horocycle expansion fits run on map backends")
    if config.truncation.weight != "horocycle":
        raise InvalidParameterError("Horocycle expansion fits need the horocycle weight")
    x = sample_points(backend, ctx.rng, 1)[0]
    phi = random_trig_polynomial(ctx.rng, 3, real=True)
    h_top = float(backend.topological_entropy())

    with store.stage("cutoff"):
        rows = []
        monotone = 0.0
        for T in CUTOFF_LENGTHS:
            family = cutoff_family(backend, T, x, h.epsilon)
            residual = local_decomposition_check(backend, family, phi)
            summary = family.summary()
            store.check("cutoff", f"decomposition[T={T:g}]", residual, tol.cutoff)
            defects = np.asarray(summary.indicator_defects)
            monotone = max(monotone, float(np.max(np.diff(defects), initial=0.0)))
            rows.append(
                {
                    "T": T,
                    "depth": summary.depth,
                    "c1": summary.c1,
                    "initial_defect": summary.initial_defect,
                    "decomposition_residual": residual,
                    "betas_plus": " ".join(repr(b) for b in summary.betas_plus),
                    "betas_minus": " ".join(repr(b) for b in summary.betas_minus),
                }
            )
        store.check("cutoff", "partial_sum_increase", monotone, tol.partition)
        store.write_csv("cutoff.csv", rows)

    with store.stage("expansion"):
        matrix = ctx.transfer(config.truncation.K)
        records = resonances(
            matrix, region_delta=config.truncation.region_delta, count=config.truncation.count
        )
        T_grid = np.geomspace(h.t_min, h.t_max, h.t_points)
        fit = expansion_fit(backend, phi, x, records, T_grid, epsilon=h.epsilon, matrix=matrix)
        if isinstance(backend, LinearCat):
            threshold = tol.residual_exponent
            gamma = np.array(fit.gamma_real) + 1j * np.array(fit.gamma_imag)
            mean = complex(fit.mean_real, fit.mean_imag)
            measured = float(np.max(np.abs(gamma - T_grid * mean)))
            oracle = max(
                abs(linear_horocycle_integral(phi, x, T) - T * mean) for T in T_grid
            )
            store.check("expansion", "oracle_deviation", abs(measured - oracle), tol.identity)
        else:
            sub = records[1].real if len(records) > 1 else 0.0
            threshold = max(sub / h_top, 0.0) + 0.1
        store.check("expansion", "residual_exponent", fit.residual_exponent, threshold)
        store.write_csv(
            "horo_fit.csv",
            [
                {
                    "T": T,
                    "gamma_real": gr,
                    "gamma_imag": gi,
                    "reconstruction_real": rr,
                    "reconstruction_imag": ri,
                    "residual": e,
                }
                for T, gr, gi, rr, ri, e in zip(
                    fit.T,
                    fit.gamma_real,
                    fit.gamma_imag,
                    fit.reconstruction_real,
                    fit.reconstruction_imag,
                    fit.residual,
                )
            ],
        )
        store.write_csv(
            "expansion_terms.csv",
            [term.model_dump(exclude={"coefficients_abs"}) for term in fit.terms],
        )
        store.add_series("gamma", fit.T, fit.gamma_real, ("T", "gamma"))
        store.add_series("residual", fit.T, fit.residual, ("T", "residual"), log=True)


def _phase_pair(L: float, amplitude: Callable[[np.ndarray], np.ndarray], **kwargs) -> PhasePair:
    return PhasePair.sample(
        lambda z: L * (z[..., 0] + 0.25 * z[..., 0] ** 2),
        lambda z: L * (1.0 + 0.5 * z),
        amplitude,
        **kwargs,
    )


def _holder_amplitude(z: np.ndarray) -> np.ndarray:
    return np.abs(z[..., 0]) ** HOLDER_EXPONENT * bump(z)


def _ibp_check(store: ResultStore, ctx: RunContext) -> None:
    tol = ctx.tolerances
    with store.stage("ibp"):
        rows = []
        pair = _phase_pair(1.0, bump)
        for k in IBP_ORDERS:
            _, report = ibp_iterate(pair, k)
            decay = ibp_decay(lambda L: _phase_pair(L, bump), IBP_SCALES, k)
            store.check("ibp", f"identity[k={k}]", report.residual, tol.ibp)
            store.check(
                "ibp", f"decay[k={k}]", decay.decay_exponent, k - tol.ibp_decay, upper=False
            )
            rows.append(
                {
                    "k": k,
                    "residual": report.residual,
                    "measured_norm": report.measured_norm,
                    "envelope": report.envelope,
                    "decay_exponent": decay.decay_exponent,
                }
            )
        store.write_csv("ibp.csv", rows)

    with store.stage("mollifier"):
        rough = _phase_pair(1.0, _holder_amplitude, points=8192, delta=HOLDER_EXPONENT)
        sweep = mollifier_sweep(rough, MOLLIFIER_SCALES)
        delta = HOLDER_EXPONENT
        store.check(
            "mollifier",
            "difference_slope",
            abs(sweep.difference_slope - delta) / delta,
            tol.mollifier_relative,
        )
        store.check(
            "mollifier",
            "gradient_slope",
            abs(sweep.gradient_slope - (delta - 1.0)) / abs(delta - 1.0),
            tol.mollifier_relative,
        )
        store.write_csv(
            "mollifier.csv",
            [
                {"epsilon": e, "difference_norm": d, "gradient_norm": g}
                for e, d, g in zip(sweep.epsilons, sweep.difference_norms, sweep.gradient_norms)
            ],
        )
        store.add_series(
            "mollifier", sweep.epsilons, sweep.difference_norms, ("epsilon", "difference"), log=True
        )


EXPERIMENT_RUNNERS: Dict[str, Callable[[ResultStore, RunContext], None]] = {
    "partition-check": _partition_check,
    "cones": _cones,
    "resonances": _resonances,
    "ly-probe": _ly_probe,
    "dolgopyat-probe": _dolgopyat_probe,
    "tau-verify": _tau_verify,
    "horo-fit": _horo_fit,
    "ibp-check": _ibp_check,
}

_WITHOUT_BACKEND = ("partition-check", "ibp-check")


def run_pipeline(
    config: RunConfig,
    directory: Optional[str | Path] = None,
    settings: Optional[AnisoresConfig] = None,
) -> ResultStore:
    """
    Run the configured experiment into a ResultStore.
    Stages run in order; a failing stage is recorded in the manifest and the run continues
    to the final flush.
    """
    settings = settings or AnisoresConfig.from_env()
    experiment = config.run.experiment
    store = ResultStore(directory or config.run.output, config)
    ctx = RunContext(
        config=config,
        rng=np.random.default_rng(config.run.seed),
        cache=MemoryCache(
            max_size=settings.cache_size,
            max_bytes=settings.cache_megabytes * 2**20 if settings.cache_megabytes else None,
        ),
        threads=settings.threads,
    )
    with run_context(experiment, store.config_hash, config.run.seed):
        logger.info(f"Running {experiment} into {store.directory}")
        if experiment not in _WITHOUT_BACKEND:
            with store.stage("backend"):
                ctx.backend = build_backend(config.backend, cache=ctx.cache)
        if store.ok("backend") or experiment in _WITHOUT_BACKEND:
            with store.stage(experiment):
                EXPERIMENT_RUNNERS[experiment](store, ctx)
        store.finish()
        stats = ctx.cache.get_stats()
        logger.info(
            f"Run finished passed={store.passed} verdicts={len(store.manifest.verdicts)} "
            f"cache hits={stats['hits']} misses={stats['misses']} bytes={stats['bytes']}"
        )
    return store


GNUPLOT_TEMPLATE = """set terminal pngcairo size 900,600
set grid
"""


def _plot_file(name: str, series: Series) -> str:
    return f"{name}_vs_{series.x_label}.dat"


def emit_plots(
    store: ResultStore,
    which: Optional[Sequence[str]] = None,
    directory: Optional[str | Path] = None,
) -> List[Path]:
    """
    Two-column plot data per series plus a gnuplot script referencing them.
    Log series are written as log10 columns.
    """
    available = sorted(store.series)
    names = available if which is None else list(which)
    unknown = [n for n in names if n not in store.series]
    if unknown or not names:
        listed = ", ".join(available) if available else "nothing"
        missing = ", ".join(unknown) if unknown else "any series"
        raise UnknownSeriesError(
            f"Store has no {missing}; available: {listed}", available=available
        )
    out = Path(directory) if directory is not None else store.directory
    out.mkdir(parents=True, exist_ok=True)

    written: List[Path] = []
    script = [schema_header(store.config_hash), GNUPLOT_TEMPLATE]
    for name in names:
        series = store.series[name]
        x = np.asarray(series.x)
        y = np.asarray(series.y)
        labels = (series.x_label, series.y_label)
        if series.log:
            keep = (x > 0) & (y > 0)
            x, y = np.log10(x[keep]), np.log10(y[keep])
            labels = (f"log10_{labels[0]}", f"log10_{labels[1]}")
        path = out / _plot_file(name, series)
        Exporter.to_plot_data(x, y, path, store.config_hash, labels)
        written.append(path)
        script += [
            f"set output '{name}.png'",
            f"set xlabel '{labels[0]}'",
            f"set ylabel '{labels[1]}'",
            f"plot '{path.name}' using 1:2 with linespoints title '{name}'",
            "",
        ]
    script_path = out / "script.gp"
    script_path.write_text("\n".join(script), encoding="utf-8")
    written.append(script_path)
    logger.info(f"Wrote {len(names)} plot series to {out}")
    return written
