"""
The time-stepping driver.

One step maps ``psi(t)`` to ``psi(t + dt)``:

1. select the ``q_nom`` heaviest keys of ``psi(t)`` (seeded tie breaking),
2. grow the effective space to their order-``m`` neighbours,
3. project ``psi(t)`` onto the grown space, which rescues coefficients of
   dropped keys that were regrown,
4. evolve inside the space with the Taylor propagator.

The first step evolves inside the space built with ``m_init`` around the
initial state and skips 1-3.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from paces import observables as obs
from paces.codec import PackedBasisTable, sort_unique_rows
from paces.io import write_checkpoint
from paces.models import HamiltonianTermSet, ModelSpec, build_model
from paces.propagator import PropagatorConfig, PropagatorDivergence, expmv
from paces.subspace import EffectiveSpace, SparseState, grow_subspace, remap_state

log = logging.getLogger(__name__)


class StepError(PropagatorDivergence):
    """A step failed; carries the step index and time."""


@dataclass
class InitialState:
    """``localized`` (one site, vibrational vacuum), ``optical`` (equal
    superposition over sites) or ``explicit`` (occupation rows + amplitudes).
    """

    kind: str = "localized"
    site: int | None = None
    occupations: list[list[int]] | None = None
    amplitudes: list[complex] | None = None


@dataclass
class RunConfig:
    model: ModelSpec
    initial: InitialState = field(default_factory=InitialState)
    m_init: int = 2
    m: int = 2
    q_nom: int = 10_000
    propagator: PropagatorConfig = field(default_factory=PropagatorConfig)
    t_max: float = 1.0
    seed: int = 0
    cadence: int = 1
    threads: int = 1
    future_weight: float = 0.0

    def __post_init__(self):
        errors = []
        if self.m < 0:
            errors.append(f"m={self.m} must be >= 0")
        if self.m_init < self.m:
            errors.append(f"m_init={self.m_init} must be >= m={self.m}")
        if self.q_nom < 1:
            errors.append(f"q_nom={self.q_nom} must be >= 1")
        if self.t_max < 0:
            errors.append(f"t_max={self.t_max} must be >= 0")
        if self.cadence < 1:
            errors.append(f"cadence={self.cadence} must be >= 1")
        if self.future_weight != 0:
            errors.append("future_weight: only current-weight truncation (tau=0) is supported")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_max / self.propagator.dt - 1e-9))


@dataclass
class DiagnosticsRecord:
    step: int
    t: float
    norm_pre: float
    norm_post: float
    discarded_weight: float
    delta_norm_expmv: float
    energy: float
    q_true: int
    taylor_order: int
    energy_after: float = float("nan")
    q_seed: int = 0

    CSV_FIELDS = ("step", "t", "norm_pre", "norm_post", "discarded_weight",
                  "delta_norm_expmv", "energy", "q_true", "taylor_order")

    def row(self):
        return [getattr(self, f) for f in self.CSV_FIELDS]


@dataclass
class ObservableRecord:
    t: float
    norm: float
    energy: float
    rmsd: float
    xbar: float
    amplitude: complex
    density: np.ndarray
    phonons: np.ndarray | None = None


@dataclass
class RunResult:
    observables: list[ObservableRecord]
    diagnostics: list[DiagnosticsRecord]
    state: SparseState
    space: EffectiveSpace
    terms: HamiltonianTermSet
    checkpoint: Path | None = None

    def amplitudes(self) -> np.ndarray:
        return np.array([o.amplitude for o in self.observables])

    def times(self) -> np.ndarray:
        return np.array([o.t for o in self.observables])

    def densities(self) -> np.ndarray:
        return np.array([o.density for o in self.observables])


def initial_keys(initial: InitialState, terms: HamiltonianTermSet):
    """Packed keys and (unnormalised) amplitudes of the initial state."""
    lay = terms.layout
    kind = initial.kind.lower()
    if kind in ("localized", "optical") and not terms.has_exciton_register:
        raise ValueError(f"{kind} initial state needs an exciton model")
    if kind == "localized":
        site = terms.geometry.center() if initial.site is None else int(initial.site)
        if not 0 <= site < terms.geometry.n_sites:
            raise ValueError(f"initial site {site} outside the lattice")
        occ = np.zeros((1, lay.n_sites), dtype=np.int64)
        occ[0, 0] = site
        return lay.pack(occ), np.ones(1, dtype=np.complex128)
    if kind == "optical":
        n = terms.geometry.n_sites
        return obs.optical_keys(terms), np.full(n, 1 / np.sqrt(n), dtype=np.complex128)
    if kind == "explicit":
        if not initial.occupations:
            raise ValueError("explicit initial state needs occupations")
        occ = np.asarray(initial.occupations, dtype=np.int64)
        amps = np.asarray(initial.amplitudes if initial.amplitudes is not None
                          else np.ones(len(occ)), dtype=np.complex128)
        if len(amps) != len(occ):
            raise ValueError("one amplitude per explicit occupation row is required")
        return lay.pack(occ), amps
    raise ValueError(f"unknown initial state kind {initial.kind!r}")


def initialize(config: RunConfig, terms: HamiltonianTermSet | None = None):
    """Normalised initial state and the space grown around it with ``m_init``."""
    terms = terms or build_model(config.model)
    terms.threads = config.threads
    words, amps = initial_keys(config.initial, terms)
    lay = terms.layout
    seed_words = sort_unique_rows(words)
    seed = PackedBasisTable(lay, seed_words, True)
    idx, _ = seed.lookup(words)
    coeffs = np.zeros(len(seed), dtype=np.complex128)
    np.add.at(coeffs, idx, amps)
    nrm = np.linalg.norm(coeffs)
    if nrm == 0:
        raise ValueError("initial state has zero norm")
    state = SparseState(seed, coeffs / nrm, 0.0)
    space = grow_subspace(seed, terms, config.m_init, config.q_nom)
    if space.q_true > config.q_nom:
        log.warning("initial space (%d keys) is larger than q_nom=%d", space.q_true, config.q_nom)
    state, _ = remap_state(state, space)
    return state, space


def truncate_select(state: SparseState, q_nom: int, seed=0) -> PackedBasisTable:
    """The ``q_nom`` keys of largest weight, as a sorted table.

    Keys tied at the cutoff weight are drawn by a seeded random permutation,
    so no key order is preferred.  If the support has at most ``q_nom`` keys
    the whole support is returned.
    """
    if q_nom < 1:
        raise ValueError("q_nom must be >= 1")
    w = np.abs(state.coefficients) ** 2
    support = np.flatnonzero(w > 0)
    if len(support) <= q_nom:
        sel = support
    else:
        ws = w[support]
        k = len(ws) - q_nom
        cutoff = np.partition(ws, k)[k]
        above = support[ws > cutoff]
        tied = support[ws == cutoff]
        rng = np.random.default_rng(seed)
        pick = tied[rng.permutation(len(tied))[: q_nom - len(above)]]
        sel = np.sort(np.concatenate([above, pick]))
    return PackedBasisTable(state.table.layout, state.table.words[sel], True)


def step(state: SparseState, space: EffectiveSpace, config: RunConfig,
         terms: HamiltonianTermSet, index: int = 0, adapt: bool = True):
    """Advance one timestep; returns ``(state, space, DiagnosticsRecord)``."""
    norm_pre = state.norm()
    discarded = 0.0
    q_seed = len(state)
    if adapt:
        M = truncate_select(state, config.q_nom, (config.seed, index))
        q_seed = len(M)
        space = grow_subspace(M, terms, config.m, config.q_nom)
        state, discarded = remap_state(state, space)
    norm_post = state.norm()
    e_before = obs.energy(state, space)
    try:
        c, order, _ = expmv(space.hamiltonian, state.coefficients, config.propagator)
    except PropagatorDivergence as exc:
        raise StepError(f"step {index} at t={state.t:.6g}: {exc}") from exc
    # multiply rather than accumulate so output times carry no drift
    new = SparseState(space.table, c, (index + 1) * config.propagator.dt)
    rec = DiagnosticsRecord(
        step=index + 1, t=new.t, norm_pre=norm_pre, norm_post=norm_post,
        discarded_weight=discarded, delta_norm_expmv=new.norm() - norm_post,
        energy=e_before, q_true=space.q_true, taylor_order=order,
        energy_after=obs.energy(new, space), q_seed=q_seed,
    )
    return new, space, rec


def measure(state: SparseState, space: EffectiveSpace, terms: HamiltonianTermSet) -> ObservableRecord:
    dens = obs.exciton_density(state, terms)
    if terms.has_exciton_register:
        xbar, spread = obs.position_stats(dens, terms)
    else:
        xbar, spread = float("nan"), float("nan")
    return ObservableRecord(
        t=state.t, norm=state.norm(), energy=obs.energy(state, space),
        rmsd=spread, xbar=xbar, amplitude=obs.dipole_amplitude(state, terms),
        density=dens, phonons=obs.phonon_numbers(state, terms),
    )


def run(config: RunConfig, checkpoint: str | Path | None = None,
        terms: HamiltonianTermSet | None = None, on_step=None) -> RunResult:
    """Run ``ceil(t_max / dt)`` steps, measuring every ``cadence`` steps.

    With ``checkpoint`` set the state is saved at every output time, so a
    failing step leaves the last good state on disk.
    """
    terms = terms or build_model(config.model)
    state, space = initialize(config, terms)
    records = [measure(state, space, terms)]
    diags: list[DiagnosticsRecord] = []
    ckpt = Path(checkpoint) if checkpoint is not None else None
    if ckpt is not None:
        write_checkpoint(ckpt, state)
    n = config.n_steps
    for i in range(n):
        state, space, rec = step(state, space, config, terms, index=i, adapt=i > 0)
        diags.append(rec)
        if on_step is not None:
            on_step(state, space, rec)
        if (i + 1) % config.cadence == 0 or i + 1 == n:
            records.append(measure(state, space, terms))
            if ckpt is not None:
                write_checkpoint(ckpt, state)
    return RunResult(records, diags, state, space, terms, ckpt)
