"""Measured quantities of a sparse state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from paces.models import HamiltonianTermSet
from paces.subspace import EffectiveSpace, SparseState


class ObservableError(ValueError):
    pass


def norm(state: SparseState) -> float:
    return float(np.linalg.norm(state.coefficients))


def energy(state: SparseState, space: EffectiveSpace) -> float:
    """``<psi|H_eff|psi> / <psi|psi>``; the state must be aligned to ``space``."""
    c = state.coefficients
    if len(c) != space.q_true:
        raise ObservableError("state is not aligned to the effective space")
    n2 = float(np.vdot(c, c).real)
    if n2 == 0:
        raise ObservableError("energy of a zero-norm state")
    return float(np.vdot(c, space.hamiltonian @ c).real) / n2


def exciton_density(state: SparseState, terms: HamiltonianTermSet) -> np.ndarray:
    """Probability of the exciton on each lattice site (row-major order).

    For spin models the per-site probability of the flipped spin is returned.
    The values sum to ``norm(state)**2``.
    """
    w = np.abs(state.coefficients) ** 2
    n = terms.geometry.n_sites
    lay = state.table.layout
    if terms.has_exciton_register:
        exc = lay.get_site(state.table.words, 0)
        return np.bincount(exc, weights=w, minlength=n)
    occ = state.table.occupations()
    return w @ occ


def position_stats(density: np.ndarray, terms: HamiltonianTermSet) -> tuple[float, float]:
    """Mean exciton position and RMSD (standard deviation of the position).

    On 2D/3D lattices the mean is reported along the first axis and the RMSD
    is the root of the summed per-axis variances.
    """
    p = np.asarray(density, dtype=float)
    total = p.sum()
    if total <= 0:
        raise ObservableError("position statistics of a zero-norm state")
    p = p / total
    x = terms.geometry.coords(np.arange(len(p))).astype(float)
    mean = p @ x
    var = p @ ((x - mean) ** 2)
    return float(mean[0]), float(np.sqrt(max(var.sum(), 0.0)))


def rmsd(density: np.ndarray, positions=None) -> float:
    """Standard deviation of a position distribution on a chain."""
    p = np.asarray(density, dtype=float)
    total = p.sum()
    if total <= 0:
        raise ObservableError("RMSD of a zero-norm state")
    p = p / total
    x = np.arange(len(p), dtype=float) if positions is None else np.asarray(positions, float)
    xbar = p @ x
    return float(np.sqrt(max(p @ (x - xbar) ** 2, 0.0)))


def phonon_numbers(state: SparseState, terms: HamiltonianTermSet) -> np.ndarray:
    """``<a_j^dagger a_j>`` per lattice site."""
    if terms.kind != "holstein":
        return np.zeros(terms.geometry.n_sites)
    w = np.abs(state.coefficients) ** 2
    lay = state.table.layout
    return np.array([w @ lay.get_site(state.table.words, terms.phonon_site(j))
                     for j in range(terms.geometry.n_sites)], dtype=float)


def optical_keys(terms: HamiltonianTermSet) -> np.ndarray:
    """Packed keys ``|j> (x) |vacuum>`` for every site ``j``, in site order."""
    lay = terms.layout
    occ = np.zeros((terms.geometry.n_sites, lay.n_sites), dtype=np.int64)
    occ[:, 0] = np.arange(terms.geometry.n_sites)
    return lay.pack(occ)


def dipole_amplitude(state: SparseState, terms: HamiltonianTermSet) -> complex:
    """Overlap with the normalised optical state ``N^-1/2 sum_j |j, vac>``.

    The physical ``<mu(t) mu(0)>`` is this value times ``N``.
    """
    if not terms.has_exciton_register:
        return complex("nan")
    idx, found = state.table.lookup(optical_keys(terms))
    n = terms.geometry.n_sites
    return complex(state.coefficients[idx[found]].sum() / np.sqrt(n))


@dataclass
class WeightCurve:
    weights: np.ndarray
    cumulative: np.ndarray
    quantiles: dict[float, int]
    tail_exponent: float | None


QUANTILES = (0.5, 0.9, 0.99, 0.9999)


def weight_histogram(state: SparseState, quantiles=QUANTILES, tail_fraction: float = 0.5) -> WeightCurve:
    """Sorted coefficient weights with cumulative-weight markers.

    ``quantiles[f]`` is the 1-based count of largest weights holding at least
    the fraction ``f`` of the total.  ``tail_exponent`` is the log-log slope
    fitted over the last ``tail_fraction`` of nonzero weights.
    """
    w = np.sort(np.abs(state.coefficients) ** 2)[::-1]
    if len(w) == 0:
        raise ObservableError("weight histogram of an empty state")
    cum = np.cumsum(w)
    total = cum[-1]
    marks = {}
    for f in quantiles:
        marks[f] = int(min(np.searchsorted(cum, f * total * (1 - 1e-12)) + 1, len(w)))
    nz = w[w > 0]
    slope = None
    start = int(len(nz) * (1 - tail_fraction))
    if len(nz) - start >= 3:
        n = np.arange(1, len(nz) + 1)[start:]
        slope = float(np.polyfit(np.log(n), np.log(nz[start:]), 1)[0])
    return WeightCurve(w, cum, marks, slope)
