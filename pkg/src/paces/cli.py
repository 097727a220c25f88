"""Command-line entry point: ``paces <subcommand> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from paces import engine, io, oracle, spectra
from paces.codec import PackedBasisTable, sort_unique_rows, table_memory_estimate
from paces.config import ConfigError, load_config
from paces.models import (HolsteinParams, ModelError, ModelSpec, build_model, dense_memory_bytes,
                          model_dimension, predicted_density, predicted_nnz,
                          sparse_memory_bytes)
from paces.observables import optical_keys, weight_histogram
from paces.subspace import MemoryLimitError, connectivity

log = logging.getLogger("paces")

SUBCOMMANDS = ("dynamics", "spectrum", "oracle-check", "model-info")


def _prepare(args):
    run_cfg, spec_cfg, resolved = load_config(args.config)
    if args.seed is not None:
        run_cfg.seed = args.seed
    run_cfg.threads = 1 if args.deterministic else max(1, args.threads)
    resolved["run"]["seed"] = run_cfg.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return run_cfg, spec_cfg, resolved, out


def _run_dynamics(run_cfg, resolved, out, histogram=False):
    result = engine.run(run_cfg, checkpoint=out / "checkpoint.bin")
    n = result.terms.geometry.n_sites
    io.write_diagnostics_csv(out / "diagnostics.csv", result.diagnostics, resolved)
    io.write_observables_csv(out / "observables.csv", result.observables, n, resolved)
    if histogram:
        io.write_weights_csv(out / "weights.csv", weight_histogram(result.state), resolved)
    return result


def cmd_dynamics(args) -> int:
    run_cfg, _, resolved, out = _prepare(args)
    result = _run_dynamics(run_cfg, resolved, out, args.histogram)
    last = result.observables[-1]
    print(f"t={last.t:.6g} norm={last.norm:.12g} energy={last.energy:.12g} "
          f"q_true={result.space.q_true} -> {out}")
    return 0


def cmd_spectrum(args) -> int:
    run_cfg, spec_cfg, resolved, out = _prepare(args)
    n = run_cfg.model.geometry.n_sites
    if args.observables:
        t, amps = io.read_observables_csv(args.observables)
        dt = float(np.median(np.diff(t)))
        if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=1e-12):
            raise ValueError("observables CSV is not uniformly sampled")
    else:
        if run_cfg.initial.kind != "optical":
            log.warning("spectrum run uses the optical initial state (config had %r)",
                        run_cfg.initial.kind)
            run_cfg.initial = engine.InitialState("optical")
            resolved["run"]["initial"] = dataclasses.asdict(run_cfg.initial)
        run_cfg.cadence = 1
        resolved["run"]["cadence"] = 1
        result = _run_dynamics(run_cfg, resolved, out)
        amps = result.amplitudes()
        dt = run_cfg.propagator.dt
    omega, A = spectra.spectrum_from_amplitudes(amps, dt, spec_cfg, n)
    io.write_spectrum_csv(out / "spectrum.csv", omega, A, resolved)
    if args.electronic_reference and run_cfg.model.kind in ("holstein", "tb"):
        p = run_cfg.model.params
        el = ModelSpec("tb", run_cfg.model.geometry,
                       HolsteinParams(eps=p.eps, J=p.J, omega0=p.omega0, g=0.0, d_pho=1))
        terms = build_model(el)
        system = oracle.dense_build(terms)
        psi0 = system.vector(optical_keys(terms), np.full(n, 1 / np.sqrt(n)))
        sig = oracle.electronic_signal(system, psi0, dt * np.arange(len(amps)))
        w_el, A_el = spectra.spectrum_from_amplitudes(sig, dt, spec_cfg, n)
        io.write_spectrum_csv(out / "spectrum_electronic.csv", w_el, A_el, resolved)
    peak = omega[np.argmax(A)]
    print(f"spectrum: {len(omega)} points, bin {omega[1] - omega[0]:.4g}, "
          f"strongest line at {peak:+.4f} omega0 -> {out}")
    return 0


def cmd_oracle_check(args) -> int:
    run_cfg, _, resolved, out = _prepare(args)
    terms = build_model(run_cfg.model)
    system = oracle.dense_build(terms, cap=args.cap)
    words, amps = engine.initial_keys(run_cfg.initial, terms)
    psi0 = system.vector(words, amps)
    psi0 /= np.linalg.norm(psi0)
    worst = 1.0

    def compare(state, space, rec):
        nonlocal worst
        ref = oracle.dense_evolve(system, psi0, state.t)
        idx, found = system.table.lookup(state.table.words)
        fid = abs(np.vdot(ref[idx[found]], state.coefficients[found]))
        worst = min(worst, fid)

    result = engine.run(run_cfg, terms=terms, on_step=compare)
    io.write_observables_csv(out / "observables.csv", result.observables,
                             terms.geometry.n_sites, resolved)
    passed = 1 - worst <= args.tolerance
    lines = [
        f"dimension: {system.dim}",
        f"steps: {len(result.diagnostics)}",
        f"final time: {result.state.t:.6g}",
        f"min fidelity: {worst:.16f}",
        f"1 - fidelity: {1 - worst:.3e} (tolerance {args.tolerance:.1e})",
        f"result: {'PASS' if passed else 'FAIL'}",
    ]
    (out / "oracle_check.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if passed else 1


def cmd_model_info(args) -> int:
    run_cfg, _, resolved, out = _prepare(args)
    spec = run_cfg.model
    terms = build_model(spec)
    lay = terms.layout
    lines = [
        f"model: {spec.kind} on {'x'.join(map(str, spec.geometry.extents))}",
        f"packed sites: {lay.n_sites}, payload bits per key: {lay.payload_bits}, "
        f"words per key: {lay.words_per_row} x {lay.wordsize} bit",
        f"Hilbert-space dimension: {model_dimension(spec)}",
        f"lookup table for q_nom={run_cfg.q_nom}: "
        f"{table_memory_estimate(lay, run_cfg.q_nom) / 8 / 2**20:.3f} MiB",
    ]
    try:
        dens = predicted_density(spec)
        nnz = predicted_nnz(spec)
        dense = dense_memory_bytes(spec)
        lines += [
            f"predicted density: {float(dens):.6e} (= {dens})",
            f"predicted nonzeros: {nnz}",
            f"dense/sparse storage ratio: 1/{float(1 / dens):.6g}"
            + (" (< 1/4,000,000)" if dens < Fraction(1, 4_000_000) else ""),
            f"dense matrix at 8 bytes/entry: {dense / 2**40:.4g} TiB",
            f"nonzeros at 8 bytes/entry: {sparse_memory_bytes(spec) / 2**20:.4g} MiB",
        ]
    except ModelError as exc:
        lines.append(f"density formula not applicable: {exc}")
    try:
        words, _ = engine.initial_keys(run_cfg.initial, terms)
        seed = PackedBasisTable(lay, sort_unique_rows(words), True)
        for k in range(run_cfg.m_init + 1):
            kappa = connectivity(seed, terms, k)
            lines.append(f"connectivity of initial state, order {k}: {kappa} = {float(kappa):.6g}")
    except (ValueError, MemoryLimitError) as exc:
        lines.append(f"connectivity not computed: {exc}")
    (out / "model_info.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paces", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "dynamics": cmd_dynamics,
        "spectrum": cmd_spectrum,
        "oracle-check": cmd_oracle_check,
        "model-info": cmd_model_info,
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.set_defaults(func=handlers[name])
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="truncation tie-break seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for key expansion")
        sp.add_argument("--deterministic", action="store_true",
                        help="force the single-threaded, bit-reproducible path")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "dynamics":
            sp.add_argument("--histogram", action="store_true",
                            help="also write the sorted coefficient weights of the final state")
        if name == "spectrum":
            sp.add_argument("--observables", help="use amplitudes from an existing observables CSV")
            sp.add_argument("--electronic-reference", action="store_true",
                            help="also write the g=0 spectrum from exact diagonalization")
        if name == "oracle-check":
            sp.add_argument("--tolerance", type=float, default=1e-10,
                            help="allowed 1 - fidelity")
            sp.add_argument("--cap", type=int, default=oracle.DEFAULT_CAP,
                            help="largest dense dimension")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (MemoryLimitError, engine.StepError, oracle.OracleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
