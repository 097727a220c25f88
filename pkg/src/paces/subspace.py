"""
Effective Hilbert spaces grown from a seed set of basis keys.

The seed set is expanded by repeatedly applying the Hamiltonian to the newest
keys (the frontier), merging and deduplicating with sort/unique on packed
rows.  The Hamiltonian elements met on the way are kept as triplets and
assembled into a duplicate-free CSR matrix over the final table.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from paces.codec import PackedBasisTable, row_keys, sort_unique_rows
from paces.models import HamiltonianTermSet

log = logging.getLogger(__name__)

MEMORY_ENV = "PACES_MAX_MEMORY_BYTES"


class AssemblyError(RuntimeError):
    """Internal inconsistency while assembling the effective Hamiltonian."""


class MemoryLimitError(MemoryError):
    """The table plus matrix would exceed ``PACES_MAX_MEMORY_BYTES``."""


def _memory_cap() -> int | None:
    raw = os.environ.get(MEMORY_ENV)
    if not raw:
        return None
    return int(float(raw))


def check_memory(n_rows: int, n_triplets: int, words_per_row: int, wordsize: int) -> None:
    cap = _memory_cap()
    if cap is None:
        return
    # table rows + (row, col, value) triplets + one complex state vector
    need = n_rows * words_per_row * wordsize // 8 + n_triplets * 24 + n_rows * 16
    if need > cap:
        raise MemoryLimitError(
            f"effective space needs ~{need} bytes (rows={n_rows}, elements={n_triplets}), "
            f"over {MEMORY_ENV}={cap}"
        )


@dataclass
class SparseState:
    """Coefficients aligned to the rows of a sorted packed table."""

    table: PackedBasisTable
    coefficients: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.complex128)
        if self.coefficients.shape != (len(self.table),):
            raise ValueError(
                f"{self.coefficients.shape[0]} coefficients for {len(self.table)} table rows"
            )

    def __len__(self):
        return len(self.table)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def support(self) -> np.ndarray:
        """Row indices with nonzero coefficient."""
        return np.flatnonzero(self.coefficients != 0)


@dataclass
class ExpansionTranscript:
    """Everything collected while growing a space: keys per order and triplets."""

    table: PackedBasisTable
    row_words: np.ndarray
    col_words: np.ndarray
    values: np.ndarray
    layer_sizes: list[int] = field(default_factory=list)


@dataclass
class EffectiveSpace:
    table: PackedBasisTable
    hamiltonian: sp.csr_matrix
    m: int
    q_nom: int

    @property
    def q_true(self) -> int:
        return len(self.table)

    @property
    def layout(self):
        return self.table.layout


def _merge_sorted(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    return sort_unique_rows(np.concatenate([a, b]))


def _new_rows(candidates: np.ndarray, table: PackedBasisTable) -> np.ndarray:
    cand = sort_unique_rows(candidates)
    _, found = table.lookup(cand)
    return cand[~found]


def expand(seed: PackedBasisTable, terms: HamiltonianTermSet, m: int) -> ExpansionTranscript:
    """Grow ``seed`` to the union of its neighbour sets of order ``0..m``.

    Terms are applied once to every key of the final table: to the keys of
    orders ``< m`` during growth and to the order-``m`` frontier at the end,
    where images outside the table are dropped.  The result therefore holds
    every Hamiltonian element between two table keys.
    """
    if len(seed) == 0:
        raise ValueError("cannot grow a subspace from an empty seed set")
    if m < 0:
        raise ValueError("neighbour order must be >= 0")
    lay = seed.layout
    table = PackedBasisTable(lay, seed.words, True)
    frontier = seed.words
    rows, cols, vals = [], [], []
    layers = [len(seed)]
    for _ in range(m):
        src, dst, amp = terms.apply_batch(frontier)
        rows.append(dst)
        cols.append(frontier[src])
        vals.append(amp)
        new = _new_rows(dst, table)
        check_memory(len(table) + len(new), sum(len(v) for v in vals),
                     lay.words_per_row, lay.wordsize)
        table = PackedBasisTable(lay, _merge_sorted(table.words, new), True)
        frontier = new
        layers.append(len(new))
        if len(new) == 0:
            break
    if len(frontier):
        src, dst, amp = terms.apply_batch(frontier)
        _, found = table.lookup(dst)
        rows.append(dst[found])
        cols.append(frontier[src[found]])
        vals.append(amp[found])
    w = lay.words_per_row
    return ExpansionTranscript(
        table=table,
        row_words=np.concatenate(rows) if rows else np.zeros((0, w), lay.word_dtype),
        col_words=np.concatenate(cols) if cols else np.zeros((0, w), lay.word_dtype),
        values=np.concatenate(vals) if vals else np.zeros(0),
        layer_sizes=layers,
    )


def assemble_effective_hamiltonian(transcript: ExpansionTranscript) -> sp.csr_matrix:
    """Resolve triplet keys to table indices and build a Hermitian CSR matrix.

    The Hermitian conjugate of every triplet is added, then entries with the
    same ``(row, col)`` are collapsed to one.  Such duplicates only arise when
    the same physical element was derived twice, so they must agree.
    """
    table = transcript.table
    r, rf = table.lookup(transcript.row_words)
    c, cf = table.lookup(transcript.col_words)
    if not (rf.all() and cf.all()):
        raise AssemblyError("triplet key missing from the effective table")
    v = np.asarray(transcript.values)
    rows = np.concatenate([r, c])
    cols = np.concatenate([c, r])
    vals = np.concatenate([v, np.conj(v)])
    n = len(table)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    first = np.ones(len(rows), dtype=bool)
    first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    if not first.all():
        # every duplicate must equal the first entry of its run
        head = np.cumsum(first) - 1
        ref = vals[first][head]
        scale = np.maximum(np.abs(ref), 1.0)
        if np.any(np.abs(vals - ref) > 1e-12 * scale):
            raise AssemblyError("duplicate matrix elements with different values")
    rows, cols, vals = rows[first], cols[first], vals[first]
    if np.isrealobj(vals) or not np.any(np.imag(vals)):
        vals = np.real(vals)
    H = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    H.sort_indices()
    return H


def grow_subspace(seed: PackedBasisTable, terms: HamiltonianTermSet, m: int,
                  q_nom: int | None = None) -> EffectiveSpace:
    """Effective space spanned by the order-``0..m`` neighbours of ``seed``."""
    if not seed.is_sorted:
        seed = PackedBasisTable(seed.layout, sort_unique_rows(seed.words), True)
    transcript = expand(seed, terms, m)
    H = assemble_effective_hamiltonian(transcript)
    check_memory(len(transcript.table), H.nnz, seed.layout.words_per_row, seed.layout.wordsize)
    return EffectiveSpace(transcript.table, H, m, len(seed) if q_nom is None else q_nom)


def neighbor_set(keys: PackedBasisTable, terms: HamiltonianTermSet, k: int) -> PackedBasisTable:
    """Keys reachable from ``keys`` by exactly ``k`` applications of ``H``.

    Computed structurally, one application at a time, so accidental
    cancellations inside ``H^k`` are not detected.
    """
    words = sort_unique_rows(keys.words)
    for _ in range(k):
        _, dst, _ = terms.apply_batch(words)
        words = sort_unique_rows(dst)
    return PackedBasisTable(keys.layout, words, True)


def connectivity(keys: PackedBasisTable, terms: HamiltonianTermSet, k: int) -> Fraction:
    """``|N^(k)(M)| / |M|``."""
    n = len(np.unique(row_keys(keys.words)))
    if n == 0:
        raise ValueError("connectivity of an empty set")
    return Fraction(len(neighbor_set(keys, terms, k)), n)


def remap_state(state: SparseState, target: EffectiveSpace | PackedBasisTable):
    """Project ``state`` onto the rows of ``target``.

    Returns ``(new_state, discarded_weight)``.  Coefficients of keys present
    in the target are copied, all others are dropped and their squared
    magnitudes summed into the discarded weight.
    """
    table = target.table if isinstance(target, EffectiveSpace) else target
    idx, found = table.lookup(state.table.words)
    out = np.zeros(len(table), dtype=np.complex128)
    out[idx[found]] = state.coefficients[found]
    dropped = state.coefficients[~found]
    discarded = float(np.vdot(dropped, dropped).real)
    return SparseState(table, out, state.t), discarded
