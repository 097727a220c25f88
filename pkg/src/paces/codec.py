"""
Bit-packed storage of many-body basis labels.

Every basis state is a tuple of per-site occupation numbers.  A row of the
lookup table stores those occupations back to back, site 0 in the most
significant bits of word 0, using ``ceil(log2(d_i))`` bits for site ``i``.
Because the packing is left-aligned, comparing rows word by word gives the
same order as comparing the occupation tuples lexicographically, which is
what the sort-based deduplication in :mod:`paces.subspace` relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_WORD_DTYPES = {8: np.uint8, 16: np.uint16, 32: np.uint32, 64: np.uint64}


class EncodingError(ValueError):
    """An occupation number does not fit its site."""


class CorruptionError(ValueError):
    """A packed row decodes to an occupation outside its site dimension."""


def _bits_for(d: int) -> int:
    # d=1 sites carry no information and occupy zero bits
    return (d - 1).bit_length()


@dataclass(frozen=True)
class SiteLayout:
    """Per-site dimensions plus the derived bit offsets of a packed row.

    Parameters
    ----------
    dims : sequence of int
        Local dimension ``d_i`` of every site.
    wordsize : int
        Bits per table word (8, 16, 32 or 64).
    """

    dims: tuple[int, ...]
    wordsize: int = 32
    bits: tuple[int, ...] = field(init=False, repr=False)
    offsets: tuple[int, ...] = field(init=False, repr=False)
    words_per_row: int = field(init=False)
    # per site: list of (word index, shift inside word, piece width, shift inside value)
    _pieces: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("a layout needs at least one site")
        if any(d < 1 for d in dims):
            raise ValueError(f"site dimensions must be >= 1, got {dims}")
        if self.wordsize not in _WORD_DTYPES:
            raise ValueError(f"unsupported wordsize {self.wordsize}")
        bits = tuple(_bits_for(d) for d in dims)
        offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(bits)[:-1]]))
        total = sum(bits)
        omega = max(1, -(-total // self.wordsize))
        ws = self.wordsize
        pieces = []
        for off, b in zip(offsets, bits):
            site_pieces = []
            end = off + b
            for w in range(off // ws, (end - 1) // ws + 1 if b else off // ws):
                lo = max(off, w * ws)
                hi = min(end, (w + 1) * ws)
                site_pieces.append((w, (w + 1) * ws - hi, hi - lo, end - hi))
            pieces.append(tuple(site_pieces))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "words_per_row", omega)
        object.__setattr__(self, "_pieces", tuple(pieces))

    @classmethod
    def uniform(cls, n_sites: int, d: int, wordsize: int = 32) -> "SiteLayout":
        return cls((d,) * n_sites, wordsize)

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def payload_bits(self) -> int:
        return sum(self.bits)

    @property
    def word_dtype(self):
        return _WORD_DTYPES[self.wordsize]

    @property
    def hilbert_dim(self) -> int:
        return int(np.prod(self.dims, dtype=object))

    # -- vectorised site access ------------------------------------------------

    def get_site(self, words: np.ndarray, site: int) -> np.ndarray:
        """Occupation of ``site`` for every row of a ``(q, Ω)`` word array."""
        words = np.asarray(words)
        value = np.zeros(words.shape[0], dtype=np.uint64)
        for w, wshift, width, vshift in self._pieces[site]:
            mask = np.uint64((1 << width) - 1)
            part = (words[:, w].astype(np.uint64) >> np.uint64(wshift)) & mask
            value |= part << np.uint64(vshift)
        return value.astype(np.int64)

    def set_site(self, words: np.ndarray, site: int, values) -> np.ndarray:
        """Return a copy of ``words`` with ``site`` overwritten by ``values``."""
        out = np.array(words, copy=True)
        values = np.asarray(values, dtype=np.uint64)
        for w, wshift, width, vshift in self._pieces[site]:
            mask = (1 << width) - 1
            col = out[:, w].astype(np.uint64)
            col &= np.uint64(~(mask << wshift) & ((1 << 64) - 1))
            col |= ((values >> np.uint64(vshift)) & np.uint64(mask)) << np.uint64(wshift)
            out[:, w] = col.astype(out.dtype)
        return out

    def pack(self, occupations) -> np.ndarray:
        """Pack a ``(q, L)`` occupation array into a ``(q, Ω)`` word array."""
        occ = np.asarray(occupations, dtype=np.int64)
        if occ.ndim != 2 or occ.shape[1] != self.n_sites:
            raise EncodingError(
                f"expected occupations of shape (q, {self.n_sites}), got {occ.shape}"
            )
        for i, d in enumerate(self.dims):
            bad = (occ[:, i] < 0) | (occ[:, i] >= d)
            if bad.any():
                raise EncodingError(
                    f"site {i}: occupation {int(occ[bad, i][0])} outside [0, {d})"
                )
        words = np.zeros((occ.shape[0], self.words_per_row), dtype=np.uint64)
        for i in range(self.n_sites):
            val = occ[:, i].astype(np.uint64)
            for w, wshift, width, vshift in self._pieces[i]:
                mask = np.uint64((1 << width) - 1)
                words[:, w] |= ((val >> np.uint64(vshift)) & mask) << np.uint64(wshift)
        return words.astype(self.word_dtype)

    def unpack(self, words, check: bool = True) -> np.ndarray:
        """Decode a ``(q, Ω)`` word array into ``(q, L)`` occupations."""
        words = np.asarray(words)
        if words.ndim != 2 or words.shape[1] != self.words_per_row:
            raise CorruptionError(
                f"expected rows of {self.words_per_row} words, got shape {words.shape}"
            )
        occ = np.empty((words.shape[0], self.n_sites), dtype=np.int64)
        for i, d in enumerate(self.dims):
            occ[:, i] = self.get_site(words, i)
            if check and (occ[:, i] >= d).any():
                raise CorruptionError(f"site {i}: decoded occupation >= {d}")
        return occ


def pack_state(occupations: Sequence[int], layout: SiteLayout) -> tuple[int, ...]:
    """Pack one occupation vector into a tuple of ``Ω`` unsigned words.

    >>> pack_state([6, 0, 0, 1, 0, 2, 0, 15], SiteLayout.uniform(8, 16, 16))
    (24577, 527)
    """
    occ = list(occupations)
    if len(occ) != layout.n_sites:
        raise EncodingError(f"expected {layout.n_sites} occupations, got {len(occ)}")
    row = [0] * layout.words_per_row
    for i, (n, d) in enumerate(zip(occ, layout.dims)):
        n = int(n)
        if not 0 <= n < d:
            raise EncodingError(f"site {i}: occupation {n} outside [0, {d})")
        for w, wshift, width, vshift in layout._pieces[i]:
            row[w] |= ((n >> vshift) & ((1 << width) - 1)) << wshift
    return tuple(row)


def unpack_state(row: Sequence[int], layout: SiteLayout) -> list[int]:
    """Inverse of :func:`pack_state`."""
    row = [int(w) for w in row]
    if len(row) != layout.words_per_row:
        raise CorruptionError(f"expected {layout.words_per_row} words, got {len(row)}")
    occ = []
    for i, d in enumerate(layout.dims):
        n = 0
        for w, wshift, width, vshift in layout._pieces[i]:
            n |= ((row[w] >> wshift) & ((1 << width) - 1)) << vshift
        if n >= d:
            raise CorruptionError(f"site {i}: decoded occupation {n} >= {d}")
        occ.append(n)
    return occ


def table_memory_estimate(layout: SiteLayout, q: int) -> int:
    """Bits needed for a table of ``q`` packed rows: ``q * Ω * wordsize``.

    Each row carries ``sum(ceil(log2 d_i))`` payload bits; the remainder of
    the last word (at most ``wordsize - 1`` bits) is padding.
    """
    if q < 0:
        raise ValueError("q must be non-negative")
    return int(q) * layout.words_per_row * layout.wordsize


# -- row keys: 1-D sortable views of packed rows ---------------------------------


def row_keys(words: np.ndarray) -> np.ndarray:
    """A 1-D array whose natural order is the lexicographic order of the rows.

    Single-word rows are returned as plain unsigned integers.  Multi-word
    rows are viewed as opaque big-endian byte strings so that ``memcmp``
    order equals numeric word order.
    """
    words = np.asarray(words)
    if words.shape[1] == 1:
        return np.ascontiguousarray(words[:, 0])
    be = np.ascontiguousarray(words.astype(words.dtype.newbyteorder(">")))
    return be.view(f"V{be.dtype.itemsize * words.shape[1]}").ravel()


def sort_unique_rows(words: np.ndarray) -> np.ndarray:
    """Sorted, duplicate-free copy of a ``(q, Ω)`` word array."""
    words = np.asarray(words)
    if words.shape[0] == 0:
        return words.copy()
    _, idx = np.unique(row_keys(words), return_index=True)
    return words[idx]


@dataclass
class PackedBasisTable:
    """A ``(q, Ω)`` array of packed rows under one :class:`SiteLayout`."""

    layout: SiteLayout
    words: np.ndarray
    is_sorted: bool = False
    _keys: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.words, dtype=self.layout.word_dtype)
        if w.ndim != 2 or w.shape[1] != self.layout.words_per_row:
            raise ValueError(
                f"table words must have shape (q, {self.layout.words_per_row}), got {w.shape}"
            )
        self.words = w

    @classmethod
    def from_occupations(cls, occupations, layout: SiteLayout, sort: bool = True):
        words = layout.pack(np.atleast_2d(np.asarray(occupations, dtype=np.int64)))
        if sort:
            return cls(layout, sort_unique_rows(words), True)
        return cls(layout, words, False)

    def __len__(self) -> int:
        return self.words.shape[0]

    @property
    def keys(self) -> np.ndarray:
        if self._keys is None:
            self._keys = row_keys(self.words)
        return self._keys

    def occupations(self) -> np.ndarray:
        return self.layout.unpack(self.words)

    def lookup(self, words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Table index of each query row and a mask of which rows were found."""
        if not self.is_sorted:
            raise ValueError("lookup requires a sorted table")
        q = row_keys(np.asarray(words, dtype=self.layout.word_dtype))
        n = len(self)
        if n == 0:
            return np.zeros(len(q), dtype=np.int64), np.zeros(len(q), dtype=bool)
        pos = np.searchsorted(self.keys, q)
        clipped = np.minimum(pos, n - 1)
        found = (pos < n) & (self.keys[clipped] == q)
        return clipped.astype(np.int64), found

    def memory_bits(self) -> int:
        return table_memory_estimate(self.layout, len(self))
