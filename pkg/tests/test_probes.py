import numpy as np
import pytest

from anisores.backends import LAMBDA_U, LinearCat
from anisores.exceptions import InvalidParameterError
from anisores.observables import single_mode
from anisores.probes import (
    dolgopyat_probe,
    eigenvector_asymptote,
    lasota_yorke_probe,
    random_states,
    remove_resonances,
    transfer_growth_probe,
)
from anisores.spectral_blocks import AnisotropicIndex
from anisores.transfer_operator import WeightSpec, fibre_family

H_TOP = 0.9624236501192069

STRONG = AnisotropicIndex(s=-1.0, t=1.0, q=0.5)
WEAK = AnisotropicIndex(s=-2.0, t=0.5, q=0.0)


@pytest.fixture
def family():
    return fibre_family(LinearCat(), WeightSpec(kind="horocycle"), 4, nodes=12)


def test_growth_probe_on_constant_state(partition, ensemble):
    constant = single_mode((0, 0)).to_vector(4)
    report = transfer_growth_probe(
        LinearCat(),
        WeightSpec(kind="horocycle"),
        partition,
        ensemble,
        AnisotropicIndex(s=0.0, t=0.0, q=0.0),
        alphas=[1, 2, 3],
        samples=[constant],
        K=4,
    )
    assert report.rate == pytest.approx(H_TOP, abs=1e-9)
    assert report.constant == pytest.approx(1.0, rel=1e-9)
    assert report.h_top == pytest.approx(H_TOP)
    assert report.global_constant == pytest.approx(1.0, rel=1e-9)
    assert report.envelope_ratio_min is None


def test_lasota_yorke_rejects_bad_ordering():
    with pytest.raises(InvalidParameterError, match="s' < s < 0"):
        lasota_yorke_probe(None, None, None, WEAK, STRONG, 3.0, 0.1)


def test_lasota_yorke_rejects_z_below_growth_bound(family, partition, ensemble):
    with pytest.raises(InvalidParameterError, match="growth bound"):
        lasota_yorke_probe(family, partition, ensemble, STRONG, WEAK, 0.5, 0.1)


def test_lasota_yorke_report(family, partition, ensemble, rng):
    z = H_TOP + 2.0
    report = lasota_yorke_probe(
        family, partition, ensemble, STRONG, WEAK, z, 0.1, n_max=3, sample_count=2, rng=rng
    )
    assert report.growth_bound == pytest.approx(family.growth_bound())
    assert report.bound == pytest.approx(1.0 / (z - 0.1))
    assert report.constant > 0.0
    assert report.single_step_constant > 0.0
    assert len(report.raw_asymptotes) == 2


def test_remove_resonances_kills_constant_mode(family):
    F = family.exponential_state(single_mode((0, 0)).to_vector(4), 0.0)
    (cleaned,), removed = remove_resonances(family, [F], 0.5)
    assert removed == 1
    assert family.norm(cleaned) < 1e-10


def test_eigenvector_asymptote(family):
    vector = single_mode((0, 0)).to_vector(4)
    assert eigenvector_asymptote(family, vector, LAMBDA_U, H_TOP + 1.0, n_max=4) == pytest.approx(
        1.0, rel=1e-6
    )


def test_dolgopyat_validation():
    with pytest.raises(InvalidParameterError):
        dolgopyat_probe(None, 0.0, 2.0, 8.0, 1.0, 0.1)
    with pytest.raises(InvalidParameterError):
        dolgopyat_probe(None, 1.0, 8.0, 8.0, 1.0, 0.1)
    with pytest.raises(InvalidParameterError):
        dolgopyat_probe(None, 1.0, 0.5, 8.0, 1.0, 0.1)


def test_dolgopyat_powers(family, rng):
    report = dolgopyat_probe(family, 1.0, 2.0, 8.0, 1.0, 0.1, points=4, sample_count=2, rng=rng)
    assert report.lambda_max == pytest.approx(H_TOP, abs=1e-9)
    assert report.imag_parts[0] == pytest.approx(2.0)
    assert report.imag_parts[-1] == pytest.approx(8.0)
    assert report.powers == [1, 2, 2, 3]
    assert len(report.constant_plain) == 4


def test_random_states_shape(family, rng):
    states = random_states(rng, family, 3)
    assert len(states) == 3
    assert states[0].shape == (family.q, family.size)
    assert np.iscomplexobj(states[0])
