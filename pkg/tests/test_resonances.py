import numpy as np
import pytest
import scipy.sparse as sp

from anisores.backends import LinearCat, Suspension
from anisores.exceptions import ConditioningError
from anisores.observables import mode_index
from anisores.resonances import (
    DENSE_LIMIT,
    generator_branches,
    jordan_structure,
    leading_eigenvalues,
    resolve_branches,
    resonances,
    score_stability,
    spectral_projector,
)
from anisores.transfer_operator import WeightSpec, assemble_transfer, fibre_family

from factories import build_resonance_record

H_TOP = 0.9624236501192069


def _horocycle_matrix(K=8):
    return assemble_transfer(LinearCat(), WeightSpec(kind="horocycle"), 1, K)


def test_leading_resonance_of_linear_cat():
    records = resonances(_horocycle_matrix(), count=1)
    assert len(records) == 1
    leading = records[0]
    assert leading.real == pytest.approx(H_TOP, abs=1e-9)
    assert leading.imag == pytest.approx(0.0, abs=1e-9)
    assert leading.K == 8
    assert leading.multiplicity == 1
    assert leading.biorthogonality_defect() < 1e-10

    centre = mode_index([0, 0], 8)[0]
    vector = np.abs(leading.right[:, 0])
    assert int(np.argmax(vector)) == centre
    assert vector[centre] == pytest.approx(1.0)


def test_diagonal_spectrum_and_region_cut():
    M = np.diag([2.0, 1.0, 0.5])
    records = resonances(M)
    assert [r.real for r in records] == pytest.approx([np.log(2.0), 0.0, np.log(0.5)])
    assert all(r.alpha == 1.0 for r in records)
    assert records[0].K is None

    cut = resonances(M, region_delta=-0.1)
    assert len(cut) == 2

    assert resonances(M, region_delta=5.0) == []


def test_jordan_block():
    M = np.array([[2.0, 1.0], [0.0, 2.0]])
    assert jordan_structure(M, 2.0, 2) == [2]
    assert jordan_structure(np.eye(3), 1.0, 3) == [1, 1, 1]

    (record,) = resonances(M)
    assert record.geometric_multiplicity == 1
    assert record.algebraic_multiplicities == [2]
    assert record.real == pytest.approx(np.log(2.0))

    projector = spectral_projector(record)
    assert projector.rank == 2
    assert np.allclose(projector.dense(), np.eye(2), atol=1e-10)
    assert np.allclose(projector.generator_nilpotent(M), [[0.0, 0.5], [0.0, 0.0]], atol=1e-10)


def test_projector_rejects_broken_duality():
    right = np.array([[1.0], [0.0]], dtype=complex)
    with pytest.raises(ConditioningError):
        spectral_projector(build_resonance_record(left=2.0 * right))

    projector = spectral_projector(build_resonance_record())
    assert np.allclose(projector.apply([3.0, 4.0]), [3.0, 0.0])
    assert np.allclose(projector.functionals([3.0, 4.0]), [3.0])


def test_leading_eigenvalues():
    values = leading_eigenvalues(np.diag([0.5, 4.0, 2.0]), 2)
    assert np.allclose(values, [np.log(4.0), np.log(2.0)])


def test_stability_under_refinement():
    records = resonances(_horocycle_matrix(8), count=1)
    scored = score_stability(records, _horocycle_matrix(12))
    assert scored[0].stable is True
    assert scored[0].stability < 1e-8
    assert records[0].stability is None

    shifted = score_stability(records, np.diag([2.0, 0.5]), stability_tol=1e-3)
    assert shifted[0].stable is False


def test_refined_argument_scores_records():
    records = resonances(_horocycle_matrix(8), count=1, refined=_horocycle_matrix(12))
    assert records[0].stable is True


def test_projector_nilpotent_on_jordan_block():
    M = np.zeros((4, 4))
    M[:2, :2] = [[2.0, 1.0], [0.0, 2.0]]
    M[2, 2], M[3, 3] = 0.5, 0.1
    leading = resonances(M, count=1)[0]
    N = spectral_projector(leading).nilpotent(M)
    assert np.linalg.norm(N) == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(N @ N, 0.0, atol=1e-10)

    simple = resonances(M, count=2)[1]
    assert simple.algebraic_multiplicities == [1]
    assert np.allclose(spectral_projector(simple).nilpotent(M), 0.0, atol=1e-10)


def test_sparse_path_keeps_jordan_block():
    n = 1200
    assert n > DENSE_LIMIT
    M = sp.lil_matrix((n, n))
    M.setdiag(np.concatenate([[2.0, 2.0, 0.3], np.full(n - 3, 0.01)]))
    M[0, 1] = 1.0
    M = M.tocsr()

    records = resonances(M, count=2)
    assert len(records) == 2
    leading, second = records
    assert leading.geometric_multiplicity == 1
    assert leading.algebraic_multiplicities == [2]
    assert leading.real == pytest.approx(np.log(2.0), abs=1e-6)
    assert leading.right.shape == (n, 2)
    assert leading.biorthogonality_defect() < 1e-8
    assert second.real == pytest.approx(np.log(0.3), abs=1e-8)
    assert second.algebraic_multiplicities == [1]

    N = spectral_projector(leading).nilpotent(M)
    assert np.linalg.norm(N) == pytest.approx(1.0, abs=1e-5)
    assert np.allclose(N @ N, 0.0, atol=1e-6)


def test_resolve_branches_unwraps_aliased_value():
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    true = complex(0.3, 4.0 * np.pi)
    (branch,) = resolve_branches([np.exp(true)], 1.0, [np.exp(true * golden)], golden)
    assert branch.value == pytest.approx(true, abs=1e-10)
    assert branch.winding == 3
    assert branch.mismatch < 1e-10

    # the principal log at alpha = 1 alone would report Im = 0
    assert np.log(np.exp(true)).imag == pytest.approx(0.0, abs=1e-10)


def test_generator_branches_on_suspension():
    family = fibre_family(Suspension(0.0), WeightSpec(kind="horocycle"), 4, nodes=12)
    branches = generator_branches(family, 1.0, count=2)
    leading = min(branches, key=lambda b: abs(b.value - H_TOP))
    assert leading.value == pytest.approx(H_TOP, abs=1e-8)
    assert leading.winding == 0
    assert leading.mismatch < 1e-8
