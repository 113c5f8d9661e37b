import numpy as np
import pytest

from anisores.backends import LAMBDA_S, LAMBDA_U, LinearCat, PerturbedCat, Suspension
from anisores.exceptions import InvalidParameterError, NonMixingModelError
from anisores.horocycle_lab import (
    SmoothWindow,
    anisotropic_norm,
    dual_bound_probe,
    flow_law_defect,
    horocycle_flow,
    horocycle_integral,
    horocycle_orbit,
    linear_horocycle_integral,
    renorm_identity_check,
    renorm_time,
    tau_identity_suite,
    transported_integral,
    weighted_integral,
)
from anisores.observables import FourierObservable, constant_observable, single_mode
from anisores.spectral_blocks import AnisotropicIndex

H_TOP = 0.9624236501192069
X = np.array([0.13, 0.71])


def test_renorm_time_closed_form(linear_cat):
    result = renorm_time(linear_cat, 0.3, 2, X)
    assert result.method == "closed_form"
    assert result.tau == pytest.approx(0.3 * LAMBDA_S**2)
    assert result.residual < 1e-9
    assert result.derivative == pytest.approx(LAMBDA_S**2)

    assert renorm_time(linear_cat, 0.0, 2, X).tau == 0.0
    assert renorm_time(linear_cat, 0.2, -3, X).tau == pytest.approx(0.2 * LAMBDA_U**3)


def test_renorm_time_derivative_check(linear_cat):
    result = renorm_time(linear_cat, 0.4, 1, X, check_derivative=True)
    assert result.derivative_check == pytest.approx(LAMBDA_S, rel=1e-6)


def test_closed_form_needs_linear_model():
    with pytest.raises(InvalidParameterError):
        renorm_time(PerturbedCat(0.02), 0.3, 1, X, method="closed_form")


def test_horocycle_integral_matches_closed_form(linear_cat):
    phi = FourierObservable(
        modes=np.array([[0, 0], [1, 2], [-2, 1]]),
        coefficients=np.array([0.5, 1.0 - 0.5j, 0.25j]),
    )
    numeric = horocycle_integral(linear_cat, phi, X, 5.0)
    assert abs(numeric - linear_horocycle_integral(phi, X, 5.0)) < 1e-6
    assert horocycle_integral(linear_cat, phi, X, 0.0) == 0j

    with pytest.raises(InvalidParameterError):
        horocycle_integral(linear_cat, phi, X, -1.0)


def test_constant_horocycle_integral(linear_cat):
    assert linear_horocycle_integral(constant_observable(2.0), X, 3.0) == pytest.approx(6.0)


def test_smooth_window():
    window = SmoothWindow(a=0.0, b=4.0, ramp=1.0)
    assert window.integral() == pytest.approx(3.0, abs=1e-8)
    assert window(np.array([-1.0, 2.0, 5.0])) == pytest.approx([0.0, 1.0, 0.0])
    assert window.scaled(2.0).support == (0.0, 8.0)
    assert window.support_length == 4.0

    with pytest.raises(ValueError):
        SmoothWindow(a=0.0, b=1.0, ramp=0.0)


def test_weighted_integral_needs_support(linear_cat):
    phi = constant_observable(1.0)
    with pytest.raises(InvalidParameterError):
        weighted_integral(linear_cat, lambda r: np.ones_like(r), X, phi)
    with pytest.raises(InvalidParameterError):
        weighted_integral(linear_cat, lambda r: np.ones_like(r), X, phi, support=(1.0, 1.0))

    window = SmoothWindow(a=0.0, b=4.0, ramp=1.0)
    assert weighted_integral(linear_cat, window, X, phi) == pytest.approx(3.0, abs=1e-8)


def test_renorm_identity_on_linear_cat(linear_cat):
    window = SmoothWindow(a=0.0, b=2.0, ramp=0.5)
    phi = single_mode((1, 1))
    assert renorm_identity_check(linear_cat, window, X, phi, 1.0) < 1e-8

    with pytest.raises(InvalidParameterError):
        renorm_identity_check(linear_cat, window, X, phi, -1.0)


def test_tau_identity_suite_on_linear_cat(linear_cat, rng):
    report = tau_identity_suite(
        linear_cat, rng=rng, samples=3, growth_alphas=(5, 6, 7), decay_alphas=(1, 2, 3)
    )
    assert max(report.residuals.values()) < 1e-8
    assert report.growth_exponent == pytest.approx(H_TOP, abs=1e-9)
    assert report.growth_ratio_min == pytest.approx(1.0)
    assert report.decay_theta == pytest.approx(LAMBDA_S, rel=1e-9)
    assert report.derivative_min > 0.0
    assert report.samples == 3


def test_flow_law_and_orbit(linear_cat, rng):
    assert flow_law_defect(linear_cat, rng.random((4, 2)), 0.3, -0.7) < 1e-12

    orbit = horocycle_orbit(linear_cat, X, np.linspace(0.0, 1.0, 5))
    assert orbit.points.shape == (5, 2)
    assert orbit.tangency_defect(linear_cat) < 1e-6
    assert orbit.speed_defect(linear_cat) < 1e-6


def test_constant_roof_horocycle_is_rejected():
    with pytest.raises(NonMixingModelError):
        horocycle_flow(Suspension(0.0), [0.1, 0.2, 0.3], 0.5)


def test_anisotropic_norm_of_constant(partition, ensemble):
    index = AnisotropicIndex(s=-0.5, t=0.5, q=0.25)
    assert anisotropic_norm(constant_observable(2.5), partition, ensemble, index) == pytest.approx(
        2.5
    )


def test_dual_bound_probe(linear_cat, partition, ensemble):
    window = SmoothWindow(a=0.0, b=2.0, ramp=0.5)
    with pytest.raises(InvalidParameterError):
        dual_bound_probe(
            linear_cat, window, X, [], partition, ensemble, AnisotropicIndex(s=0.5, t=1.0, q=0.5)
        )

    report = dual_bound_probe(
        linear_cat,
        window,
        X,
        [single_mode((1, 0)), constant_observable(1.0)],
        partition,
        ensemble,
        AnisotropicIndex(s=-0.5, t=0.5, q=0.25),
    )
    assert report.support_length == 2.0
    assert report.envelope == pytest.approx(2.0 * report.holder_norm)
    assert report.max_ratio >= 1.5 - 1e-8
    assert report.implied_constant == pytest.approx(report.max_ratio / report.envelope)


def test_two_sided_growth_on_linear_cat(linear_cat, rng):
    report = tau_identity_suite(
        linear_cat, rng=rng, samples=2, growth_alphas=(5, 10, 15), decay_alphas=(1, 2)
    )
    assert report.inverse_ratio_min == pytest.approx(1.0)
    assert report.inverse_ratio_max == pytest.approx(1.0)
    assert report.growth_ratio_max == pytest.approx(1.0)

    with pytest.raises(InvalidParameterError):
        tau_identity_suite(linear_cat, rng=rng, samples=1, growth_rho=0.5)


def test_transported_integral_matches_window_integral(linear_cat):
    window = SmoothWindow(a=0.0, b=2.0, ramp=0.5)
    one = transported_integral(linear_cat, window, window.support, X, 2.0, constant_observable(1.0))
    assert one == pytest.approx(window.integral(), abs=1e-9)

    phi = single_mode((2, 1))
    moved = transported_integral(linear_cat, window, window.support, X, 1.0, phi)
    assert moved == pytest.approx(weighted_integral(linear_cat, window, X, phi), abs=1e-8)


def test_renorm_time_on_perturbed_cat():
    backend = PerturbedCat(0.02)
    leaf = renorm_time(backend, 0.3, 2, X, check_derivative=True)
    assert leaf.method == "leaf"
    assert leaf.residual < 1e-9
    assert leaf.derivative > 0.0
    assert leaf.derivative_check == pytest.approx(leaf.derivative, rel=1e-5)

    cocycle = renorm_time(backend, 0.3, 2, X, method="cocycle")
    assert cocycle.tau == pytest.approx(leaf.tau, rel=1e-6)


def test_tau_identity_suite_on_perturbed_cat(rng):
    report = tau_identity_suite(
        PerturbedCat(0.02), rng=rng, samples=2, growth_alphas=(2, 3, 4), decay_alphas=(1, 2, 3)
    )
    assert max(report.residuals.values()) < 1e-5
    assert report.derivative_min > 0.0
    assert 0.1 < report.growth_ratio_min <= report.growth_ratio_max < 10.0
    assert 0.1 < report.inverse_ratio_min <= report.inverse_ratio_max < 10.0
    assert report.growth_exponent == pytest.approx(H_TOP, rel=0.1)
