import numpy as np
import pytest

from conftest import holstein_spec, spin_spec
from paces import observables as obs
from paces.codec import PackedBasisTable
from paces.models import build_model
from paces.subspace import SparseState, grow_subspace


def _state(terms, occ, coeffs, t=0.0):
    lay = terms.layout
    words = lay.pack(occ)
    order = np.lexsort(np.asarray(occ).T[::-1])
    return SparseState(PackedBasisTable(lay, words[order], True), np.asarray(coeffs, complex)[order], t)


def test_density_and_phonons():
    terms = build_model(holstein_spec(3, 3))
    st = _state(terms, [[0, 0, 0, 0], [2, 1, 0, 2], [2, 0, 0, 0]], [0.6, 0.0 + 0.48j, 0.64])
    np.testing.assert_allclose(obs.exciton_density(st, terms), [0.36, 0, 0.64])
    np.testing.assert_allclose(obs.phonon_numbers(st, terms), [0.2304, 0, 0.4608])
    assert obs.norm(st) == pytest.approx(1.0)


def test_position_stats_chain():
    terms = build_model(holstein_spec(5, 1, kind="tb"))
    xbar, spread = obs.position_stats(np.array([0, 0.5, 0, 0.5, 0]), terms)
    assert xbar == pytest.approx(2.0)
    assert spread == pytest.approx(1.0)
    assert obs.rmsd([0, 0.5, 0, 0.5, 0]) == pytest.approx(1.0)
    assert obs.rmsd([1.0], positions=[3.0]) == 0.0


def test_position_stats_grid():
    terms = build_model(holstein_spec((3, 3), 1, kind="tb"))
    p = np.zeros(9)
    p[[0, 8]] = 0.5  # corners (0,0) and (2,2)
    xbar, spread = obs.position_stats(p, terms)
    assert xbar == pytest.approx(1.0)
    assert spread == pytest.approx(np.sqrt(2.0))


def test_zero_norm_errors():
    terms = build_model(holstein_spec(2, 1, kind="tb"))
    with pytest.raises(obs.ObservableError):
        obs.position_stats(np.zeros(2), terms)
    with pytest.raises(obs.ObservableError):
        obs.rmsd(np.zeros(2))


def test_dipole_amplitude_optical_state():
    terms = build_model(holstein_spec(4, 2))
    keys = obs.optical_keys(terms)
    np.testing.assert_array_equal(terms.layout.unpack(keys)[:, 0], [0, 1, 2, 3])
    st = SparseState(PackedBasisTable(terms.layout, keys, True), np.full(4, 0.5, complex), 0.0)
    assert obs.dipole_amplitude(st, terms) == pytest.approx(1.0)
    loc = _state(terms, [[1, 0, 0, 0, 0]], [1.0])
    assert obs.dipole_amplitude(loc, terms) == pytest.approx(0.5)


def test_energy_on_space():
    terms = build_model(holstein_spec(2, 2, g=0.5, J=0.3, eps=[0.2, 0.0]))
    seed = PackedBasisTable.from_occupations([[0, 0, 0]], terms.layout)
    space = grow_subspace(seed, terms, 2)
    c = np.zeros(space.q_true, complex)
    idx, _ = space.table.lookup(seed.words)
    c[idx] = 2.0
    assert obs.energy(SparseState(space.table, c, 0.0), space) == pytest.approx(0.2)
    with pytest.raises(obs.ObservableError):
        obs.energy(SparseState(seed, np.ones(1, complex), 0.0), space)


def test_spin_density():
    terms = build_model(spin_spec(3))
    st = _state(terms, [[1, 0, 0], [0, 1, 1]], [np.sqrt(0.25), np.sqrt(0.75)])
    np.testing.assert_allclose(obs.exciton_density(st, terms), [0.25, 0.75, 0.75])
    assert np.isnan(obs.dipole_amplitude(st, terms))


def test_weight_histogram():
    terms = build_model(holstein_spec(1, 64))
    n = np.arange(1, 65)
    w = n ** -2.0
    st = _state(terms, [[0, k] for k in range(64)], np.sqrt(w / w.sum()))
    curve = obs.weight_histogram(st)
    assert curve.weights[0] == pytest.approx(curve.weights.max())
    assert curve.cumulative[-1] == pytest.approx(1.0)
    assert curve.tail_exponent == pytest.approx(-2.0, abs=1e-9)
    counts = list(curve.quantiles.values())
    assert counts == sorted(counts) and counts[0] == 1
    assert curve.quantiles[0.9999] <= 64
