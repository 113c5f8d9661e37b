import numpy as np
import pytest

from anisores.backends import LAMBDA_U, STABLE_VECTOR, LinearCat
from anisores.exceptions import DependencyError, InvalidParameterError
from anisores.horocycle_expansion import (
    cutoff_family,
    envelope_exponent,
    expansion_fit,
    local_decomposition_check,
)
from anisores.observables import FourierObservable, constant_observable, single_mode
from anisores.resonances import resonances
from anisores.transfer_operator import WeightSpec, assemble_transfer

from factories import build_resonance_record

H_TOP = 0.9624236501192069
X = np.array([0.13, 0.71])
T_FIVE = LAMBDA_U**5


def test_real_cutoff_times_on_linear_cat(linear_cat):
    family = cutoff_family(linear_cat, T_FIVE, X, epsilon=0.25, integer_times=False)
    assert family.betas_plus[0] == pytest.approx(5.0 - np.log(4.0) / H_TOP)
    assert np.allclose(np.diff(family.plus.betas), -np.log(4.0) / H_TOP)
    assert family.c1 == pytest.approx(1.0)
    assert family.depth == 3
    assert family.betas_minus == pytest.approx(family.betas_plus)
    assert family.initial_defect < 1e-9


def test_default_cutoff_times_are_integers(linear_cat):
    family = cutoff_family(linear_cat, T_FIVE, X)
    assert family.integer_times
    assert all(float(b).is_integer() for b in family.betas_plus)
    assert family.betas_plus[0] == 3.0


def test_cutoff_at_the_base_scale(linear_cat):
    family = cutoff_family(linear_cat, 4.0, X, epsilon=0.25)
    assert family.betas_plus[0] == 0.0


def test_cutoff_validation(linear_cat):
    with pytest.raises(InvalidParameterError):
        cutoff_family(linear_cat, 0.0, X)
    with pytest.raises(InvalidParameterError):
        cutoff_family(linear_cat, 10.0, X, epsilon=0.3)


def test_cutoff_window(linear_cat):
    family = cutoff_family(linear_cat, T_FIVE, X, integer_times=False)
    values = family.window(np.array([-1.0, T_FIVE / 2.0, T_FIVE + 1.0]))
    assert values == pytest.approx([0.0, 1.0, 0.0])

    summary = family.summary(extra=1)
    assert summary.depth == 3
    assert len(summary.betas_plus) == 4
    assert len(summary.indicator_defects) == 5
    assert not summary.integer_times


def test_local_decomposition_on_linear_cat(linear_cat):
    family = cutoff_family(linear_cat, T_FIVE, X, integer_times=False)
    assert local_decomposition_check(linear_cat, family, single_mode((1, 1))) < 1e-6
    assert local_decomposition_check(linear_cat, family, constant_observable(1.0)) < 1e-8

    integer = cutoff_family(linear_cat, 40.0, X)
    assert local_decomposition_check(linear_cat, integer, single_mode((2, -1))) < 1e-6


def test_envelope_exponent():
    T = np.geomspace(np.e, 1e4, 16)
    assert envelope_exponent(T, T**0.5) == pytest.approx(0.5)
    assert envelope_exponent(T[:1], T[:1]) == 0.0


def test_expansion_fit_dependencies(linear_cat):
    phi = FourierObservable(modes=np.array([[0, 0]]), coefficients=np.array([1.0 + 0j]))
    with pytest.raises(DependencyError):
        expansion_fit(linear_cat, phi, X, [])
    with pytest.raises(DependencyError):
        expansion_fit(linear_cat, phi, X, [build_resonance_record()])
    with pytest.raises(InvalidParameterError):
        expansion_fit(linear_cat, phi, X, [build_resonance_record(K=4)], T_grid=[1.0, 10.0])


def test_leading_term_fit(linear_cat):
    matrix = assemble_transfer(LinearCat(), WeightSpec(kind="horocycle"), 1, 4)
    records = resonances(matrix, count=1)
    phi = FourierObservable(
        modes=np.array([[0, 0], [1, 0]]), coefficients=np.array([0.5 + 0j, 1.0 + 0j])
    )
    fit = expansion_fit(linear_cat, phi, X, records, T_grid=[np.e, 10.0, 50.0, 100.0])
    assert fit.leading == pytest.approx(H_TOP, abs=1e-9)
    assert fit.mean_real == pytest.approx(0.5, abs=1e-10)
    assert fit.mean_imag == pytest.approx(0.0, abs=1e-10)
    assert fit.terms == []
    assert fit.cutoff_difference is None
    assert max(fit.residual) <= phi.deviation_bound(STABLE_VECTOR) + 1e-6
