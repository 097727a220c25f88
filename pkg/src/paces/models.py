"""
Lattice Hamiltonians as symbolic term sets acting on packed basis keys.

Three families are supported:

* ``tb`` -- single-particle tight-binding hopping on a chain, grid or cube.
* ``holstein`` -- the same exciton register plus one truncated harmonic
  oscillator per site, linearly coupled to the local exciton occupation.
* ``spin`` -- spin-1/2 lattice with nearest-neighbour ``sigma_x sigma_x``
  couplings and diagonal ``sigma_z`` fields.

Single-exciton models encode the exciton position as one packed site of
dimension ``N`` followed by ``N`` phonon sites of dimension ``d_pho``, so
the exciton number is conserved by construction.  Units are hbar = 1 and
energies are measured in multiples of the phonon frequency unless the caller
chooses otherwise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from paces.codec import SiteLayout, pack_state, unpack_state

DIAGONAL = "diagonal"
HOP = "hop"
PHONON_NUMBER = "phonon-number"
VIBRONIC_LADDER = "vibronic-ladder"
SPIN_FLIP_PAIR = "spin-flip-pair"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeGeometry:
    """Open-boundary chain, square grid or simple cubic lattice."""

    extents: tuple[int, ...]

    def __post_init__(self):
        ext = tuple(int(e) for e in np.atleast_1d(self.extents))
        if not 1 <= len(ext) <= 3:
            raise ModelError(f"unsupported dimensionality {len(ext)}")
        if any(e < 1 for e in ext):
            raise ModelError(f"extents must be positive, got {ext}")
        object.__setattr__(self, "extents", ext)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.extents))

    @property
    def ndim(self) -> int:
        return len(self.extents)

    def index(self, coords: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.extents))

    def coords(self, index) -> np.ndarray:
        """Row-major coordinates, shape ``(n, ndim)`` for array input."""
        return np.stack(np.unravel_index(np.asarray(index), self.extents), axis=-1)

    def center(self) -> int:
        return self.index([(e - 1) // 2 for e in self.extents])

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour pairs ``(a, b)`` with ``a < b``, each listed once."""
        out = []
        for a in range(self.n_sites):
            ca = self.coords(a)
            for axis in range(self.ndim):
                if ca[axis] + 1 < self.extents[axis]:
                    cb = ca.copy()
                    cb[axis] += 1
                    out.append((a, self.index(cb)))
        return out

    def sublattice_sign(self) -> np.ndarray:
        """(-1)^(sum of coordinates); flips sign across every bond."""
        return (-1.0) ** self.coords(np.arange(self.n_sites)).sum(axis=1)


def _per_site(value, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(n, float(arr[0]))
    if arr.size != n:
        raise ModelError(f"{name}: expected 1 or {n} values, got {arr.size}")
    return arr


@dataclass
class HolsteinParams:
    """Parameters of the single-exciton Holstein model (``g = 0`` gives tight binding).

    ``J`` may be a scalar (uniform isotropic coupling) or one value per bond
    in the order of :meth:`LatticeGeometry.bonds`.  ``J > 0`` is H-type,
    ``J < 0`` J-type.
    """

    eps: float | Sequence[float] = 0.0
    J: float | Sequence[float] = 1.0
    omega0: float | Sequence[float] = 1.0
    g: float | Sequence[float] = 0.0
    d_pho: int = 1


@dataclass
class SpinLatticeParams:
    """``sum_<jk> v_jk sx_j sx_k + sum_j h_j sz_j`` on an open lattice."""

    v: float | Sequence[float] = 1.0
    h: float | Sequence[float] = 0.0


class Term(NamedTuple):
    kind: str
    sites: tuple[int, ...]
    amplitude: float


@dataclass
class ModelSpec:
    """What to build: model kind, geometry and parameters."""

    kind: str
    geometry: LatticeGeometry
    params: HolsteinParams | SpinLatticeParams = field(default_factory=HolsteinParams)
    wordsize: int = 32


@dataclass
class HamiltonianTermSet:
    """Operator terms plus the packed layout they act on.

    Off-diagonal terms (hop, vibronic ladder raising part, spin-flip pair) are
    stored once; :meth:`apply_batch` emits both the term and its Hermitian
    conjugate.
    """

    kind: str
    geometry: LatticeGeometry
    layout: SiteLayout
    terms: list[Term]
    d_pho: int = 1
    threads: int = 1

    @property
    def n_excitonic(self) -> int:
        return self.geometry.n_sites

    @property
    def has_exciton_register(self) -> bool:
        return self.kind in ("tb", "holstein")

    def phonon_site(self, j: int) -> int:
        """Packed site index of the oscillator attached to lattice site ``j``."""
        return 1 + j

    def dimension(self) -> int:
        return self.layout.hilbert_dim

    # -- application --------------------------------------------------------

    def apply_batch(self, words: np.ndarray):
        """Image of ``H`` on every row of a ``(q, Ω)`` key array.

        Returns ``(src, dst, amp)`` where ``src`` indexes the input rows,
        ``dst`` are the packed neighbour rows and ``amp[i] = <dst_i|H|src_i>``.
        Only nonzero elements are returned, the diagonal included.  Every term
        modifies a distinct set of sites, so a source never emits the same
        neighbour twice.
        """
        words = np.asarray(words, dtype=self.layout.word_dtype)
        q = words.shape[0]
        if self.threads > 1 and q > 4096:
            chunks = np.array_split(np.arange(q), self.threads)
            with ThreadPoolExecutor(self.threads) as pool:
                parts = list(pool.map(lambda ix: self._apply(words[ix]), chunks))
            src, dst, amp = [], [], []
            for ix, (s, d, a) in zip(chunks, parts):
                src.append(ix[s])
                dst.append(d)
                amp.append(a)
            return np.concatenate(src), np.concatenate(dst), np.concatenate(amp)
        return self._apply(words)

    def _apply(self, words):
        lay = self.layout
        q = words.shape[0]
        rows = np.arange(q)
        diag = np.zeros(q)
        src, dst, amp = [], [], []

        def emit(mask, new_words, values):
            if mask is None:
                keep = values != 0
                src.append(rows[keep])
            else:
                keep = values != 0
                src.append(rows[mask][keep])
            dst.append(new_words[keep])
            amp.append(values[keep])

        exc = lay.get_site(words, 0) if self.has_exciton_register else None
        cache = {}

        def site_vals(s):
            if s not in cache:
                cache[s] = lay.get_site(words, s)
            return cache[s]

        for kind, sites, a in self.terms:
            if kind == DIAGONAL:
                if self.has_exciton_register:
                    diag += np.where(exc == sites[0], a, 0.0)
                else:
                    diag += a * (1.0 - 2.0 * site_vals(sites[0]))
            elif kind == PHONON_NUMBER:
                diag += a * site_vals(self.phonon_site(sites[0]))
            elif kind == HOP:
                i, j = sites
                for frm, to in ((i, j), (j, i)):
                    mask = exc == frm
                    if mask.any():
                        nw = lay.set_site(words[mask], 0, np.full(mask.sum(), to))
                        emit(mask, nw, np.full(mask.sum(), a))
            elif kind == VIBRONIC_LADDER:
                j = sites[0]
                ps = self.phonon_site(j)
                n = site_vals(ps)
                up = (exc == j) & (n < self.d_pho - 1)
                if up.any():
                    nu = n[up]
                    emit(up, lay.set_site(words[up], ps, nu + 1), a * np.sqrt(nu + 1.0))
                down = (exc == j) & (n > 0)
                if down.any():
                    nd = n[down]
                    emit(down, lay.set_site(words[down], ps, nd - 1), a * np.sqrt(nd * 1.0))
            elif kind == SPIN_FLIP_PAIR:
                i, j = sites
                nw = lay.set_site(words, i, 1 - site_vals(i))
                nw = lay.set_site(nw, j, 1 - site_vals(j))
                emit(None, nw, np.full(q, a))
            else:  # pragma: no cover - build_model never produces other kinds
                raise ModelError(f"unknown term kind {kind}")

        emit(None, words, diag)
        if not src:
            return (np.zeros(0, np.int64), np.zeros((0, lay.words_per_row), lay.word_dtype),
                    np.zeros(0))
        return np.concatenate(src), np.concatenate(dst), np.concatenate(amp)


def build_model(spec: ModelSpec) -> HamiltonianTermSet:
    """Compile a :class:`ModelSpec` into a :class:`HamiltonianTermSet`."""
    geo = spec.geometry
    n = geo.n_sites
    bonds = geo.bonds()
    kind = spec.kind.lower()
    terms: list[Term] = []

    if kind in ("tb", "holstein"):
        p = spec.params
        if not isinstance(p, HolsteinParams):
            raise ModelError(f"{kind} model needs HolsteinParams")
        d_pho = int(p.d_pho) if kind == "holstein" else 1
        if d_pho < 1:
            raise ModelError(f"d_pho must be >= 1, got {p.d_pho}")
        eps = _per_site(p.eps, n, "eps")
        J = np.atleast_1d(np.asarray(p.J, dtype=float))
        if J.size == 1:
            J = np.full(len(bonds), float(J[0]))
        elif J.size != len(bonds):
            raise ModelError(f"J: expected 1 or {len(bonds)} values, got {J.size}")
        for j in range(n):
            terms.append(Term(DIAGONAL, (j,), float(eps[j])))
        for (a, b), jab in zip(bonds, J):
            terms.append(Term(HOP, (a, b), float(jab)))
        if kind == "holstein":
            omega = _per_site(p.omega0, n, "omega0")
            g = _per_site(p.g, n, "g")
            for j in range(n):
                terms.append(Term(PHONON_NUMBER, (j,), float(omega[j])))
            for j in range(n):
                terms.append(Term(VIBRONIC_LADDER, (j,), float(g[j])))
            dims = (n,) + (d_pho,) * n
        else:
            dims = (n,)
        layout = SiteLayout(dims, spec.wordsize)
        return HamiltonianTermSet(kind, geo, layout, terms, d_pho)

    if kind == "spin":
        p = spec.params
        if not isinstance(p, SpinLatticeParams):
            raise ModelError("spin model needs SpinLatticeParams")
        h = _per_site(p.h, n, "h")
        v = np.atleast_1d(np.asarray(p.v, dtype=float))
        if v.size == 1:
            v = np.full(len(bonds), float(v[0]))
        elif v.size != len(bonds):
            raise ModelError(f"v: expected 1 or {len(bonds)} values, got {v.size}")
        for j in range(n):
            terms.append(Term(DIAGONAL, (j,), float(h[j])))
        for (a, b), vab in zip(bonds, v):
            terms.append(Term(SPIN_FLIP_PAIR, (a, b), float(vab)))
        return HamiltonianTermSet("spin", geo, SiteLayout((2,) * n, spec.wordsize), terms, 2)

    raise ModelError(f"unknown model kind {spec.kind!r}")


def apply_terms(key: Sequence[int], terms: HamiltonianTermSet) -> list[tuple[tuple[int, ...], float]]:
    """All ``(neighbour key, <neighbour|H|key>)`` pairs for one packed key."""
    unpack_state(key, terms.layout)  # validates the key
    row = np.asarray([key], dtype=terms.layout.word_dtype)
    _, dst, amp = terms.apply_batch(row)
    return [(tuple(int(w) for w in d), float(a)) for d, a in zip(dst, amp)]


def key_for(occupations: Sequence[int], terms: HamiltonianTermSet) -> tuple[int, ...]:
    return pack_state(occupations, terms.layout)


def franck_condon_key(terms: HamiltonianTermSet, site: int) -> tuple[int, ...]:
    """Exciton on ``site`` with every oscillator in its ground state."""
    occ = [0] * terms.layout.n_sites
    occ[0] = site
    return pack_state(occ, terms.layout)


# -- analytic sparsity ------------------------------------------------------------


def predicted_density(spec: ModelSpec) -> Fraction:
    """Fraction of nonzero elements of the full Hamiltonian matrix.

    Valid for uniform, generically nonzero parameters on a 1D Holstein or
    tight-binding chain, and on a spin lattice of side ``L`` in ``d``
    dimensions.
    """
    geo = spec.geometry
    kind = spec.kind.lower()
    if kind in ("tb", "holstein"):
        if geo.ndim != 1:
            raise ModelError("the Holstein/TB density formula is for chains")
        L = geo.n_sites
        if kind == "tb":
            return Fraction(3 * L - 2, L * L)
        d = int(spec.params.d_pho)
        return (Fraction(5 * L - 2) - Fraction(2 * L, d)) / (L * L * d**L)
    if kind == "spin":
        L = geo.extents[0]
        if any(e != L for e in geo.extents):
            raise ModelError("the spin-lattice density formula needs equal extents")
        dd = geo.ndim
        return Fraction(1 + dd * (L - 1) * L ** (dd - 1), 2 ** (L**dd))
    raise ModelError(f"unknown model kind {spec.kind!r}")


def model_dimension(spec: ModelSpec) -> int:
    n = spec.geometry.n_sites
    kind = spec.kind.lower()
    if kind == "tb":
        return n
    if kind == "holstein":
        return n * int(spec.params.d_pho) ** n
    if kind == "spin":
        return 2**n
    raise ModelError(f"unknown model kind {spec.kind!r}")


def predicted_nnz(spec: ModelSpec) -> int:
    nnz = predicted_density(spec) * model_dimension(spec) ** 2
    if nnz.denominator != 1:
        raise ModelError(f"formula gives non-integer nnz {nnz}")
    return int(nnz)


def dense_memory_bytes(spec: ModelSpec, bytes_per_entry: int = 8) -> int:
    return model_dimension(spec) ** 2 * bytes_per_entry


def sparse_memory_bytes(spec: ModelSpec, bytes_per_entry: int = 8) -> int:
    return predicted_nnz(spec) * bytes_per_entry
