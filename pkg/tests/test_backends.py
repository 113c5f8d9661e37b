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
    PerturbedCat,
    Suspension,
)
from anisores.backends.base import line_angle
from anisores.exceptions import InvalidParameterError, InvalidTimeError, NonMixingModelError

H_TOP = 0.9624236501192069


def test_cat_constants():
    assert np.allclose(CAT_MATRIX @ CAT_INVERSE, np.eye(2))
    assert np.allclose(CAT_MATRIX @ STABLE_VECTOR, LAMBDA_S * STABLE_VECTOR)
    assert np.allclose(CAT_MATRIX @ UNSTABLE_VECTOR, LAMBDA_U * UNSTABLE_VECTOR)
    assert np.log(LAMBDA_U) == pytest.approx(H_TOP, abs=1e-12)


def test_linear_cat_flow(linear_cat):
    assert np.allclose(linear_cat.flow([0.1, 0.2], 1), [0.4, 0.3])
    assert np.allclose(linear_cat.flow([0.4, 0.3], -1), [0.1, 0.2])

    pts = np.random.default_rng(0).random((5, 2))
    assert np.allclose(linear_cat.flow(linear_cat.flow(pts, 3), -3), pts)


def test_linear_cat_rejects_fractional_time(linear_cat):
    with pytest.raises(InvalidTimeError):
        linear_cat.flow([0.1, 0.2], 0.5)
    with pytest.raises(InvalidTimeError):
        linear_cat.differential([0.1, 0.2], 1.5)


def test_linear_cat_matrix_power(linear_cat):
    assert np.array_equal(linear_cat.matrix_power(2), [[5.0, 3.0], [3.0, 2.0]])
    assert np.array_equal(linear_cat.matrix_power(-1), CAT_INVERSE)
    assert np.array_equal(linear_cat.differential([0.3, 0.7], 2), linear_cat.matrix_power(2))


def test_matrix_power_does_not_wrap(linear_cat):
    fib = [0, 1]
    while len(fib) < 122:
        fib.append(fib[-1] + fib[-2])
    exact = linear_cat.matrix_power(60, exact=True)
    assert [[int(v) for v in row] for row in exact] == [[fib[121], fib[120]], [fib[120], fib[119]]]
    inverse = linear_cat.matrix_power(-60, exact=True)
    assert [[int(v) for v in row] for row in exact @ inverse] == [[1, 0], [0, 1]]
    assert linear_cat.matrix_power(60)[0, 0] == pytest.approx(float(fib[121]), rel=1e-15)
    assert linear_cat.matrix_power(60)[0, 0] > 0.0


def test_linear_cat_horocycle(linear_cat):
    x = np.array([0.1, 0.3])
    assert np.allclose(linear_cat.horocycle(x, 0.5), np.mod(x + 0.5 * STABLE_VECTOR, 1.0))
    assert linear_cat.horocycle_weight(x, 1) == pytest.approx(LAMBDA_U)
    assert linear_cat.horocycle_weight(x, 3) == pytest.approx(LAMBDA_U**3)
    assert linear_cat.stable_expansion(x, 2) == pytest.approx(LAMBDA_S**2)
    assert linear_cat.renorm_closed_form(2.0, 3) == pytest.approx(2.0 * LAMBDA_S**3)
    assert linear_cat.anosov_constants() == (1.0, pytest.approx(LAMBDA_S))


def test_linear_cat_dual_directions(linear_cat):
    duals = linear_cat.dual_directions([0.2, 0.6])
    assert abs(duals["minus"] @ UNSTABLE_VECTOR) < 1e-12
    assert abs(duals["plus"] @ STABLE_VECTOR) < 1e-12
    assert duals["minus"] @ STABLE_VECTOR > 0
    assert duals["plus"] @ UNSTABLE_VECTOR > 0


def test_torus_distance_wraps(linear_cat):
    assert linear_cat.torus_distance([0.95, 0.5], [0.05, 0.5]) == pytest.approx(0.1)


def test_perturbed_cat_validation():
    with pytest.raises(InvalidParameterError):
        PerturbedCat(0.2)
    with pytest.raises(InvalidParameterError):
        PerturbedCat(0.02, shape="twist")  # type: ignore[arg-type]


def test_perturbed_cat_volume_preservation():
    assert PerturbedCat(0.02, shape="shear").volume_preserving
    assert not PerturbedCat(0.02).volume_preserving
    assert PerturbedCat(0.0).volume_preserving

    pts = np.random.default_rng(1).random((8, 2))
    D = PerturbedCat(0.05, shape="shear").differential(pts, 2)
    assert np.allclose(np.linalg.det(D), 1.0)


@pytest.mark.parametrize("shape", ["additive", "shear"])
def test_perturbed_cat_inverse(shape):
    backend = PerturbedCat(0.05, shape=shape)
    pts = np.random.default_rng(2).random((8, 2))
    back = backend.flow(backend.flow(pts, 2), -2)
    assert np.max(backend.torus_distance(back, pts)) < 1e-10


def test_perturbed_cat_stable_direction_is_invariant():
    backend = PerturbedCat(0.03)
    pts = np.random.default_rng(3).random((6, 2))
    e_minus, residual = backend.stable_direction(pts)
    assert residual <= backend.direction_tol

    image = (backend.differential(pts, 1) @ e_minus[..., None])[..., 0]
    e_image, _ = backend.stable_direction(backend.flow(pts, 1))
    assert np.max(line_angle(image, e_image)) < 1e-8


def test_perturbed_cat_reduces_to_linear():
    pts = np.random.default_rng(4).random((4, 2))
    assert np.allclose(PerturbedCat(0.0).flow(pts, 2), LinearCat().flow(pts, 2))


def test_suspension_flow():
    backend = Suspension(0.0)
    point, crossings = backend.flow_with_crossings([0.1, 0.2, 0.5], 1.0)
    assert np.allclose(point, [0.4, 0.3, 0.5])
    assert crossings == 1
    assert backend.delta_theta([0.1, 0.2, 0.5], 1.0) == pytest.approx(1.0)

    back, crossings = backend.flow_with_crossings(point, -1.0)
    assert np.allclose(back, [0.1, 0.2, 0.5])
    assert crossings == -1


def test_suspension_roof():
    backend = Suspension(0.1)
    assert backend.roof(np.array([0.0, 0.3])) == pytest.approx(1.1)
    assert backend.roof(np.array([0.5, 0.3])) == pytest.approx(0.9)
    assert backend.mean_roof() == pytest.approx(1.0)
    assert backend.topological_entropy() == pytest.approx(H_TOP)
    assert backend.is_mixing
    assert not Suspension(0.0).is_mixing


def test_suspension_stable_expansion():
    backend = Suspension(0.1)
    x = np.array([0.2, 0.7, 0.3])
    for alpha in (0.5, 1.0, 2.5):
        expected = LAMBDA_S ** backend.delta_theta(x, alpha)
        assert backend.stable_expansion(x, alpha) == pytest.approx(expected)
        expected = 1.0 / backend.stable_expansion(backend.flow(x, -alpha), alpha)
        assert backend.horocycle_weight(x, alpha) == pytest.approx(expected)


def test_suspension_validation():
    with pytest.raises(InvalidParameterError):
        Suspension(1.0)
    with pytest.raises(NonMixingModelError):
        Suspension(0.0).horocycle([0.1, 0.2, 0.3], 1.0)
