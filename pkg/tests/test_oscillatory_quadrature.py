import numpy as np
import pytest

from anisores.exceptions import HypothesisError, InvalidParameterError, ResolutionError
from anisores.oscillatory_quadrature import (
    bump,
    ibp_decay,
    ibp_iterate,
    ibp_transform,
    mollifier,
    mollifier_sweep,
    oscillatory_integral,
    regularized_ibp,
)

from factories import build_phase_pair


def test_phase_pair_shapes():
    pair = build_phase_pair()
    assert pair.dim == 1
    assert pair.spacing == pytest.approx(4.0 / 1024)
    assert pair.support().sum() > 0

    with pytest.raises(InvalidParameterError):
        build_phase_pair(gradient=lambda z: 1.0 + 0.5 * z[..., 0])
    with pytest.raises(InvalidParameterError):
        build_phase_pair(delta=1.5)


def test_bump_support():
    z = np.array([-1.5, 0.0, 0.5, 1.0])
    values = bump(z)
    assert values[0] == 0.0
    assert values[-1] == 0.0
    assert values[1] == pytest.approx(np.exp(-1.0))
    assert bump(np.array([2.0]), radius=3.0)[0] > 0.0


def test_single_integration_by_parts():
    pair = build_phase_pair()
    V1, report = ibp_transform(pair)
    assert V1.shape == pair.amplitude.shape
    assert report.order == 1
    assert report.residual < 1e-8
    assert abs(oscillatory_integral(pair)) > 0.0


def test_stationary_phase_is_rejected():
    pair = build_phase_pair(phase=lambda z: z[..., 0] ** 2, gradient=lambda z: 2.0 * z)
    with pytest.raises(HypothesisError):
        ibp_transform(pair)


def test_ibp_iterate_bounds():
    pair = build_phase_pair(smoothness=1)
    with pytest.raises(InvalidParameterError):
        ibp_iterate(pair, 2)
    with pytest.raises(InvalidParameterError):
        ibp_iterate(pair, -1)

    V0, report = ibp_iterate(pair, 0)
    assert np.array_equal(V0, pair.amplitude)
    assert report.order == 0

    V2, report = ibp_iterate(build_phase_pair(), 2)
    assert report.residual < 1e-8
    assert report.measured_norm is not None
    assert report.envelope is not None


@pytest.mark.parametrize("k", [1, 2])
def test_ibp_decay_exponent(k):
    report = ibp_decay(lambda L: build_phase_pair(L=L), [4.0, 8.0, 16.0, 32.0], k)
    assert report.decay_exponent == pytest.approx(k, abs=1e-6)


def test_mollifier_unit_mass():
    spacing = 0.01
    kernel, gradient = mollifier(0.1, spacing, 1)
    assert np.sum(kernel) * spacing == pytest.approx(1.0)
    assert gradient.shape == kernel.shape + (1,)
    assert np.sum(gradient) * spacing == pytest.approx(0.0, abs=1e-10)

    kernel2, _ = mollifier(0.1, 0.02, 2)
    assert np.sum(kernel2) * 0.02**2 == pytest.approx(1.0)


def test_regularized_ibp_validation():
    pair = build_phase_pair()
    with pytest.raises(InvalidParameterError):
        regularized_ibp(pair, 0.5, 0.1)
    with pytest.raises(ResolutionError):
        regularized_ibp(pair, 4.0, pair.spacing)


def test_unsmoothed_split_is_exact():
    split = regularized_ibp(build_phase_pair(), 4.0, 0.0)
    assert split.residual < 1e-8
    assert split.difference_norm == 0.0
    assert split.remainder_term == pytest.approx(0.0, abs=1e-14)
    assert split.gradient_norm > 0.0


def test_mollifier_sweep_orders_scales():
    sweep = mollifier_sweep(build_phase_pair(), [0.1, 0.4, 0.2])
    assert sweep.epsilons == [0.4, 0.2, 0.1]
    assert sweep.difference_norms[-1] < sweep.difference_norms[0]
    assert len(sweep.gradient_norms) == 3
