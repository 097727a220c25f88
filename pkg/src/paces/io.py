"""Binary checkpoints and CSV output."""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from paces.codec import PackedBasisTable, SiteLayout

MAGIC = b"PACES\x01"


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, state) -> None:
    """Write ``state`` atomically.

    Layout (little-endian): magic, wordsize u8, L u32, dims u32*L, q u64,
    packed words (``wordsize`` bits each, q*Ω of them), coefficients as
    (f64 real, f64 imag)*q, time f64.
    """
    path = Path(path)
    lay = state.table.layout
    words = np.ascontiguousarray(state.table.words, dtype=lay.word_dtype).astype(
        np.dtype(lay.word_dtype).newbyteorder("<"))
    coeffs = np.ascontiguousarray(state.coefficients, dtype="<c16")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BI", lay.wordsize, lay.n_sites))
        fh.write(np.asarray(lay.dims, dtype="<u4").tobytes())
        fh.write(struct.pack("<Q", len(state.table)))
        fh.write(words.tobytes())
        fh.write(coeffs.tobytes())
        fh.write(struct.pack("<d", state.t))
    os.replace(tmp, path)


def read_checkpoint(path):
    from paces.subspace import SparseState

    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    wordsize, L = struct.unpack_from("<BI", data, pos)
    pos += 5
    dims = np.frombuffer(data, dtype="<u4", count=L, offset=pos)
    pos += 4 * L
    (q,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    lay = SiteLayout(tuple(int(d) for d in dims), wordsize)
    wdt = np.dtype(lay.word_dtype).newbyteorder("<")
    nwords = q * lay.words_per_row
    words = np.frombuffer(data, dtype=wdt, count=nwords, offset=pos)
    pos += nwords * wdt.itemsize
    coeffs = np.frombuffer(data, dtype="<c16", count=q, offset=pos)
    pos += 16 * q
    (t,) = struct.unpack_from("<d", data, pos)
    if pos + 8 != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    table = PackedBasisTable(lay, words.reshape(q, lay.words_per_row).astype(lay.word_dtype), True)
    return SparseState(table, coeffs.astype(np.complex128), t)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _header_comment(fh, config: dict | None) -> None:
    if config is not None:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")


def write_diagnostics_csv(path, records, config: dict | None = None) -> None:
    from paces.engine import DiagnosticsRecord

    with open(path, "w", newline="") as fh:
        _header_comment(fh, config)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DiagnosticsRecord.CSV_FIELDS)
        for r in records:
            w.writerow([_fmt(v) for v in r.row()])


def observables_header(n_sites: int) -> list[str]:
    return (["t", "norm", "energy", "rmsd", "xbar", "re_amp", "im_amp"]
            + [f"density_{j}" for j in range(n_sites)])


def write_observables_csv(path, records, n_sites: int, config: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        _header_comment(fh, config)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(observables_header(n_sites))
        for r in records:
            amp = complex(r.amplitude)
            w.writerow([_fmt(v) for v in (r.t, r.norm, r.energy, r.rmsd, r.xbar, amp.real, amp.imag)]
                       + [_fmt(v) for v in r.density])


def read_observables_csv(path):
    """Times and complex dipole amplitudes from an observables CSV."""
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    t, amp = [], []
    for row in reader:
        t.append(float(row["t"]))
        amp.append(complex(float(row["re_amp"]), float(row["im_amp"])))
    return np.array(t), np.array(amp)


def write_spectrum_csv(path, omega, A, config: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        _header_comment(fh, config)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega_over_omega0", "A"])
        for x, y in zip(omega, A):
            w.writerow([_fmt(x), _fmt(y)])


def write_weights_csv(path, curve, config: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        _header_comment(fh, config)
        marks = ", ".join(f"{q}:{n}" for q, n in curve.quantiles.items())
        fh.write(f"# quantiles: {marks}; tail_exponent: {curve.tail_exponent}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "weight", "cumulative"])
        for i, (x, c) in enumerate(zip(curve.weights, curve.cumulative), start=1):
            w.writerow([i, _fmt(x), _fmt(c)])
