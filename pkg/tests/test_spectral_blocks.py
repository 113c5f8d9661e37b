import numpy as np
import pytest

from anisores.backends import (
    CAT_INVERSE,
    CAT_MATRIX,
    LAMBDA_S,
    LAMBDA_U,
    STABLE_VECTOR,
    UNSTABLE_VECTOR,
    LinearCat,
)
from anisores.config import ConeConfig, IndexConfig
from anisores.exceptions import (
    GeometryError,
    InvalidParameterError,
    PreconditionError,
    ResolutionError,
    SingularDifferentialError,
)
from anisores.observables import single_mode
from anisores.spectral_blocks import (
    AnisotropicIndex,
    Cone,
    arrow_partition,
    block_apply,
    build_cone_ensemble,
    build_partition,
    check_lasota_yorke_indices,
    cone_expansion_bound,
    cone_hyperbolicity_check,
    cone_inclusion_margin,
    ensemble_from_config,
    kernel_l1_norms,
    local_norm,
    minimal_hyperbolic_step,
    mode_weights,
    sample_directions,
    smooth_step,
    smoothstep_polynomial,
    torus_grid,
)


def test_smooth_steps():
    u = np.array([-0.5, 0.0, 0.5, 1.0, 1.5])
    assert np.allclose(smooth_step(u), [0.0, 0.0, 0.5, 1.0, 1.0])
    assert np.allclose(smoothstep_polynomial(u, 3), [0.0, 0.0, 0.5, 1.0, 1.0])

    v = np.linspace(0.0, 1.0, 11)
    assert np.allclose(smooth_step(v) + smooth_step(1.0 - v), 1.0)


def test_partition_sums_to_one(partition, rng):
    xi = rng.uniform(-90.0, 90.0, size=(2000, 2))
    assert np.max(np.abs(partition.psi_all(xi).sum(axis=0) - 1.0)) < 1e-12


def test_partition_support(partition, rng):
    xi = rng.normal(size=(4000, 2)) * 40.0
    r = partition.frequency_norm(xi)
    for n in range(1, partition.max_level + 1):
        outside = (r < 2.0 ** (n - 1)) | (r > 2.0 ** (n + 1))
        assert np.all(partition.psi(n, xi)[outside] == 0.0)


def test_partition_dyadic_similarity(partition, rng):
    xi = rng.normal(size=(500, 2)) * 30.0
    for n in range(2, partition.max_level + 1):
        assert np.allclose(partition.psi(n, xi), partition.psi(1, 2.0 ** (1 - n) * xi))


def test_build_partition_validation():
    with pytest.raises(InvalidParameterError):
        build_partition(max_level=0)
    with pytest.raises(InvalidParameterError):
        build_partition(chi_order=1)
    with pytest.raises(InvalidParameterError):
        build_partition(norm_choice="l3")
    assert build_partition(norm_choice="l4").norm == "l4"


def test_cone_ensemble_partition_of_unity(ensemble, rng):
    xi = rng.normal(size=(2000, 2))
    assert np.allclose(ensemble.phi_all(xi).sum(axis=0), 1.0)
    assert np.all(ensemble.phi_all(xi) >= -1e-15)

    # companions are 1 on the support of their function
    for sigma in ("-", "+", "0"):
        inside = ensemble.support(sigma, xi)
        assert np.allclose(ensemble.companion(sigma, xi[inside]), 1.0)


def test_cone_ensemble_axes(ensemble):
    assert ensemble.phi("-", STABLE_VECTOR) == pytest.approx(1.0)
    assert ensemble.phi("+", UNSTABLE_VECTOR) == pytest.approx(1.0)
    assert ensemble.minus.contains(STABLE_VECTOR)
    assert not ensemble.minus.contains(UNSTABLE_VECTOR)


def test_build_cone_ensemble_invariants():
    with pytest.raises(GeometryError) as excinfo:
        build_cone_ensemble(
            Cone.from_angle(0.0, 30.0), Cone.from_angle(40.0, 30.0), np.deg2rad(5.0)
        )
    assert excinfo.value.invariant == "transversality"

    with pytest.raises(GeometryError) as excinfo:
        build_cone_ensemble(
            Cone.from_angle(0.0, 20.0), Cone.from_angle(90.0, 20.0), np.deg2rad(20.0)
        )
    assert excinfo.value.invariant == "transition_width"

    with pytest.raises(GeometryError) as excinfo:
        build_cone_ensemble(
            Cone(axis=(1.0, 0.0, 0.0), aperture=0.3), Cone.from_angle(90.0, 10.0), 0.1
        )
    assert excinfo.value.invariant == "dimension"


def test_ensemble_from_config_explicit_axes():
    ensemble = ensemble_from_config(ConeConfig(minus_axis=-60.0, plus_axis=30.0))
    assert ensemble.minus.contains(np.array([np.cos(np.deg2rad(-60.0)), np.sin(np.deg2rad(-60.0))]))


def test_lasota_yorke_indices():
    strong = AnisotropicIndex.from_config(IndexConfig())
    weak = AnisotropicIndex.from_config(IndexConfig(), weak=True)
    check_lasota_yorke_indices(strong, weak)

    with pytest.raises(InvalidParameterError):
        check_lasota_yorke_indices(strong, strong)
    with pytest.raises(InvalidParameterError):
        check_lasota_yorke_indices(AnisotropicIndex(s=0.1, t=0.9, q=0.5), weak)


def test_mode_weights_at_origin(partition, ensemble):
    index = AnisotropicIndex(s=-0.9, t=0.9, q=0.5)
    assert mode_weights(partition, ensemble, index, np.zeros((1, 2)))[0] == pytest.approx(1.0)

    # deep in the stable cone the weight is 4^(s n) at most
    k = np.array([[20.0, -32.0]])
    assert mode_weights(partition, ensemble, index, k)[0] < 1.0


def test_block_apply_reconstructs(partition, ensemble):
    values = single_mode((1, 2)).to_grid(32) + 0.5 * single_mode((-3, 5)).to_grid(32)
    field = block_apply(partition, ensemble, None, values)
    assert field.coefficients.shape == (3, partition.max_level + 1, 32, 32)
    assert np.allclose(field.reconstruct(), values, atol=1e-12)


def test_block_apply_grid_checks(partition, ensemble):
    with pytest.raises(ResolutionError):
        block_apply(partition, ensemble, None, np.zeros((24, 24)))
    with pytest.raises(ResolutionError):
        block_apply(partition, ensemble, None, np.zeros((32, 16)))


def test_local_norm_of_constant(partition, ensemble):
    index = AnisotropicIndex(s=-0.9, t=0.9, q=0.5)
    field = block_apply(partition, ensemble, index, np.full((32, 32), 2.0))
    assert local_norm(field, index) == pytest.approx(2.0)


def test_kernel_l1_norms(ensemble):
    partition = build_partition(max_level=4)
    norms = kernel_l1_norms(partition, ensemble, 32)
    assert set(norms) == {"-", "+", "0"}
    assert all(len(values) == 5 for values in norms.values())
    assert all(v >= 0 for values in norms.values() for v in values)


def test_cone_certificate_linear(ensemble):
    pts = torus_grid(4)
    certificate = cone_hyperbolicity_check(LinearCat().differential(pts, -1), ensemble)
    assert certificate.holds
    assert certificate.margin_minus > 0
    assert certificate.margin_zero > 0
    assert certificate.samples == 16

    assert not cone_hyperbolicity_check(np.eye(2), ensemble).holds
    assert minimal_hyperbolic_step(LinearCat(), ensemble, grid=4) == 1


def test_cone_certificate_uses_transposed_differential(ensemble):
    # sheared inverse cat: D and D^tr give different verdicts
    D = CAT_INVERSE @ np.array([[1.0, 0.0], [-0.425, 1.0]])
    assert cone_hyperbolicity_check(D, ensemble).holds
    assert not cone_hyperbolicity_check(D.T, ensemble).holds
    assert cone_hyperbolicity_check(np.stack([D, D]), ensemble).samples == 2


def test_cone_certificate_singular(ensemble):
    with pytest.raises(SingularDifferentialError):
        cone_hyperbolicity_check(np.array([[1.0, 1.0], [1.0, 1.0]]), ensemble)


def test_cone_inclusion_linear(linear_cat):
    report = cone_inclusion_margin(linear_cat, [0.3, 0.4], 1, gamma=0.1, gamma_prime=0.08)
    assert report.holds
    assert report.margin_minus == pytest.approx(0.08 - 0.1 * LAMBDA_S**2, abs=1e-9)
    assert report.margin_plus == pytest.approx(0.08 - 0.1 * LAMBDA_S**2, abs=1e-9)

    with pytest.raises(PreconditionError):
        cone_inclusion_margin(linear_cat, [0.3, 0.4], 1, gamma=0.1, gamma_prime=0.01)
    with pytest.raises(PreconditionError):
        cone_inclusion_margin(linear_cat, [0.3, 0.4], 0, gamma=0.1, gamma_prime=0.08)


def test_cone_expansion_linear(linear_cat):
    report = cone_expansion_bound(linear_cat, [0.3, 0.4], 1, gamma=0.1, gamma_prime=0.08)
    assert report.holds
    assert report.axis_ratio == pytest.approx(LAMBDA_U)
    assert report.bound == pytest.approx(1.08 / 1.1 * LAMBDA_U)
    assert report.conservative_bound < report.bound
    assert report.min_ratio >= report.bound


def test_arrow_partition(ensemble):
    strong = AnisotropicIndex(s=-0.9, t=0.9, q=0.5)
    weak = AnisotropicIndex(s=-1.4, t=0.4, q=0.0)
    report = arrow_partition(CAT_INVERSE, strong, weak, ensemble, max_level=5)
    assert report.pairs
    for pair in report.pairs:
        assert strong.exponent(pair.sigma) <= weak.exponent(pair.tau)
    assert all(np.isfinite(v) for v in report.implied_constant.values())


def test_arrow_partition_identity(ensemble):
    index = AnisotropicIndex(s=-1.0, t=1.0, q=0.5)
    report = arrow_partition(np.eye(2), index, index, ensemble, max_level=7)
    for sigma in ("-", "+", "0"):
        assert report.norm_tau[sigma] == pytest.approx(1.0)
        gaps = {
            pair.n - pair.ell
            for pair in report.pairs
            if pair.sigma == sigma and pair.tau == sigma
        }
        assert gaps == set(range(-4, 5))


def test_arrow_partition_cat_norm(ensemble):
    index = AnisotropicIndex(s=-1.0, t=1.0, q=0.5)
    report = arrow_partition(CAT_MATRIX, index, index, ensemble, max_level=3)
    assert report.norm_tau["+"] == pytest.approx(LAMBDA_U, rel=1e-10)


def test_arrow_partition_singular(ensemble):
    index = AnisotropicIndex(s=-1.0, t=1.0, q=0.5)
    with pytest.raises(SingularDifferentialError):
        arrow_partition(np.zeros((2, 2)), index, index, ensemble)


def test_arrow_partition_nonsymmetric_norms(ensemble):
    D = np.array([[1.0, 0.6], [0.0, 1.0]])
    index = AnisotropicIndex(s=-1.0, t=1.0, q=0.5)
    report = arrow_partition(D, index, index, ensemble, max_level=2, directions=720)

    axes = np.stack([ensemble.minus.unit_axis, ensemble.plus.unit_axis])
    rays = np.concatenate([sample_directions(2, 720), axes], axis=0)
    for sigma in ("-", "+", "0"):
        tau_rays = rays[ensemble.companion_support(sigma, rays)]
        # row eta @ D is (D^tr eta)^tr
        expected_tau = np.max(np.linalg.norm(tau_rays @ D, axis=1))
        assert report.norm_tau[sigma] == pytest.approx(expected_tau)
        sigma_rays = rays[ensemble.support(sigma, rays)]
        expected_sigma = np.max(np.linalg.norm(sigma_rays @ np.linalg.inv(D), axis=1))
        assert report.norm_sigma[sigma] == pytest.approx(expected_sigma)
