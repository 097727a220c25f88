from fractions import Fraction

import numpy as np
import pytest

from conftest import holstein_spec, spin_spec
from paces.codec import PackedBasisTable, row_keys
from paces.models import build_model
from paces.oracle import dense_build
from paces.subspace import (MEMORY_ENV, AssemblyError, ExpansionTranscript, MemoryLimitError,
                            SparseState, assemble_effective_hamiltonian, connectivity, expand,
                            grow_subspace, neighbor_set, remap_state)


def _seed(terms, occ):
    return PackedBasisTable.from_occupations(occ, terms.layout)


def _restricted(system, table):
    idx, found = system.table.lookup(table.words)
    assert found.all()
    return system.hamiltonian[np.ix_(idx, idx)], idx


def _keyset(table):
    return set(row_keys(table.words).tolist())


def test_union_of_neighbour_sets():
    terms = build_model(holstein_spec(3, 4, g=0.8, eps=[0.2, -0.1, 0.05]))
    seed = _seed(terms, [[1, 0, 0, 0]])
    for m in range(4):
        space = grow_subspace(seed, terms, m)
        union = set()
        for k in range(m + 1):
            union |= _keyset(neighbor_set(seed, terms, k))
        assert _keyset(space.table) == union


def test_layers_and_zero_order():
    terms = build_model(holstein_spec(2, 3))
    seed = _seed(terms, [[0, 0, 0]])
    t0 = expand(seed, terms, 0)
    assert len(t0.table) == 1 and t0.layer_sizes == [1]
    t2 = expand(seed, terms, 2)
    assert sum(t2.layer_sizes) == len(t2.table)
    with pytest.raises(ValueError):
        expand(seed, terms, -1)
    with pytest.raises(ValueError):
        expand(PackedBasisTable(terms.layout, np.zeros((0, 1), np.uint32), True), terms, 1)


def test_growth_saturates_on_closed_sector():
    terms = build_model(holstein_spec(2, 2, g=0.5))
    space = grow_subspace(_seed(terms, [[0, 0, 0]]), terms, 20)
    assert space.q_true == terms.dimension()


@pytest.mark.parametrize("m", [1, 2, 3])
def test_effective_hamiltonian_equals_restriction(m):
    rng = np.random.default_rng(m)
    terms = build_model(holstein_spec(3, 3, g=0.9, J=-0.6, eps=rng.normal(size=3)))
    system = dense_build(terms)
    seed = _seed(terms, [[0, 0, 0, 0], [2, 1, 0, 2]])
    space = grow_subspace(seed, terms, m)
    H_ref, _ = _restricted(system, space.table)
    np.testing.assert_array_equal(space.hamiltonian.toarray(), H_ref)
    # no stored duplicates, canonical CSR
    assert space.hamiltonian.has_canonical_format


def test_restriction_acts_trivially_up_to_order_m():
    rng = np.random.default_rng(11)
    terms = build_model(holstein_spec(3, 4, g=1.1, J=0.7, eps=rng.normal(size=3)))
    system = dense_build(terms)
    H = system.hamiltonian
    seed_idx = rng.choice(system.dim, 5, replace=False)
    seed = PackedBasisTable(terms.layout, system.table.words[np.sort(seed_idx)], True)
    psi = np.zeros(system.dim, complex)
    psi[seed_idx] = rng.normal(size=5) + 1j * rng.normal(size=5)
    for m in (1, 2, 3):
        space = grow_subspace(seed, terms, m)
        idx, _ = system.table.lookup(space.table.words)
        v_full, v_eff = psi.copy(), psi[idx].copy()
        for _ in range(m):
            v_full = H @ v_full
            v_eff = space.hamiltonian @ v_eff
            # everything reached so far lives inside the grown table
            outside = np.ones(system.dim, bool)
            outside[idx] = False
            assert np.abs(v_full[outside]).max(initial=0) == 0
            np.testing.assert_allclose(v_eff, v_full[idx], rtol=0, atol=1e-12)


def test_spin_model_growth():
    rng = np.random.default_rng(5)
    terms = build_model(spin_spec((2, 2), v=rng.normal(size=4), h=rng.normal(size=4)))
    system = dense_build(terms)
    space = grow_subspace(_seed(terms, [[1, 0, 0, 0]]), terms, 1)
    H_ref, _ = _restricted(system, space.table)
    np.testing.assert_array_equal(space.hamiltonian.toarray(), H_ref)


def test_connectivity_frozen():
    terms = build_model(holstein_spec(9, 5))
    seed = _seed(terms, [[4] + [0] * 9])
    assert connectivity(seed, terms, 0) == 1
    # diagonal vanishes on the Franck-Condon key (eps = 0, no phonons)
    assert connectivity(seed, terms, 1) == 3
    assert connectivity(seed, terms, 2) == 9
    two = _seed(terms, [[4] + [0] * 9, [4, 0, 0, 0, 0, 1, 0, 0, 0, 0]])
    assert connectivity(two, terms, 1) == Fraction(7, 2)


def test_assembly_rejects_inconsistent_duplicates():
    terms = build_model(holstein_spec(2, 2))
    tab = _seed(terms, [[0, 0, 0], [1, 0, 0]])
    a, b = tab.words[0:1], tab.words[1:2]
    bad = ExpansionTranscript(tab, np.vstack([a, a]), np.vstack([b, b]), np.array([1.0, 2.0]))
    with pytest.raises(AssemblyError):
        assemble_effective_hamiltonian(bad)
    other = _seed(terms, [[0, 1, 1]])
    missing = ExpansionTranscript(tab, other.words, a, np.array([1.0]))
    with pytest.raises(AssemblyError):
        assemble_effective_hamiltonian(missing)


def test_remap_state_discards_and_keeps():
    terms = build_model(holstein_spec(2, 3))
    src = _seed(terms, [[0, 0, 0], [0, 1, 0], [1, 2, 2]])
    state = SparseState(src, np.array([0.6, 0.0, 0.8j]), 1.5)
    target = _seed(terms, [[0, 0, 0], [0, 1, 0], [1, 0, 0]])
    out, discarded = remap_state(state, target)
    np.testing.assert_array_equal(out.coefficients, [0.6, 0.0, 0.0])
    assert discarded == pytest.approx(0.64)
    assert out.t == 1.5


def test_memory_cap(monkeypatch):
    terms = build_model(holstein_spec(5, 4, g=1.0))
    seed = _seed(terms, [[2] + [0] * 5])
    monkeypatch.setenv(MEMORY_ENV, "2000")
    with pytest.raises(MemoryLimitError, match=MEMORY_ENV):
        grow_subspace(seed, terms, 4)
    monkeypatch.setenv(MEMORY_ENV, "1e9")
    assert grow_subspace(seed, terms, 4).q_true > 0
