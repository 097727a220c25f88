"""
Dense brute-force reference for small instances.

The full basis is enumerated in packed-key order, the Hamiltonian is filled
from the same term set the sparse engine uses, and states are propagated
exactly through an eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from paces.codec import PackedBasisTable
from paces.models import HamiltonianTermSet

DEFAULT_CAP = 20_000


class OracleError(RuntimeError):
    pass


@dataclass
class DenseSystem:
    table: PackedBasisTable
    hamiltonian: np.ndarray
    _eig: tuple | None = None

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def eigh(self):
        if self._eig is None:
            H = self.hamiltonian
            if not np.allclose(H, H.conj().T, rtol=0, atol=1e-13 * max(1.0, np.abs(H).max())):
                raise OracleError("Hamiltonian is not Hermitian")
            try:
                self._eig = np.linalg.eigh(H)
            except np.linalg.LinAlgError as exc:  # pragma: no cover
                raise OracleError(f"eigendecomposition failed: {exc}") from exc
        return self._eig

    def vector(self, keys, amplitudes) -> np.ndarray:
        """Dense vector with ``amplitudes`` placed on packed ``keys``."""
        idx, found = self.table.lookup(np.atleast_2d(keys))
        if not found.all():
            raise OracleError("key outside the enumerated basis")
        psi = np.zeros(self.dim, dtype=np.complex128)
        np.add.at(psi, idx, amplitudes)
        return psi


def full_basis(terms: HamiltonianTermSet) -> PackedBasisTable:
    lay = terms.layout
    grids = np.meshgrid(*[np.arange(d) for d in lay.dims], indexing="ij")
    occ = np.stack([g.ravel() for g in grids], axis=1)
    # meshgrid with "ij" already enumerates lexicographically
    return PackedBasisTable(lay, lay.pack(occ), True)


def dense_build(terms: HamiltonianTermSet, cap: int = DEFAULT_CAP) -> DenseSystem:
    """Dense Hamiltonian of the whole truncated product space."""
    D = terms.dimension()
    if D > cap:
        raise OracleError(f"dimension {D} exceeds the dense cap {cap}")
    table = full_basis(terms)
    src, dst, amp = terms.apply_batch(table.words)
    rows, found = table.lookup(dst)
    if not found.all():  # pragma: no cover - closed by construction
        raise OracleError("term image left the enumerated basis")
    H = np.zeros((D, D), dtype=np.result_type(amp, np.float64))
    np.add.at(H, (rows, src), amp)
    return DenseSystem(table, H)


def dense_evolve(system: DenseSystem, psi0, t: float) -> np.ndarray:
    """``exp(-i H t) psi0`` via ``H = V diag(w) V^dagger``."""
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (system.dim,):
        raise OracleError(f"state of length {psi0.shape} for dimension {system.dim}")
    w, V = system.eigh()
    return V @ (np.exp(-1j * w * t) * (V.conj().T @ psi0))


def dense_trajectory(system: DenseSystem, psi0, times) -> np.ndarray:
    """States at each of ``times``; shape ``(len(times), D)``."""
    w, V = system.eigh()
    coef = V.conj().T @ np.asarray(psi0, dtype=np.complex128)
    phases = np.exp(-1j * np.outer(times, w))
    return (phases * coef) @ V.T


def electronic_signal(system: DenseSystem, psi0, times) -> np.ndarray:
    """``<psi0| exp(-i H t) |psi0>`` at every time, from the spectrum of ``H``."""
    w, V = system.eigh()
    weights = np.abs(V.conj().T @ np.asarray(psi0, dtype=np.complex128)) ** 2
    return np.exp(-1j * np.outer(times, w)) @ weights
