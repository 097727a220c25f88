"""
Run configuration files.

Plain sectioned ``key = value`` text read with :mod:`configparser`::

    [model]
    model = holstein        ; holstein | tb | spin
    extents = 7             ; "7", "8x8" or "2x2x2"
    eps = 0                 ; scalar or comma list (disorder)
    J = 1
    omega0 = 1
    g = 4
    d_pho = 8

    [initial]
    kind = localized        ; localized | optical | explicit
    site = center

    [run]
    m_init = 10
    m = 2
    q_nom = 32000
    dt = 0.05
    t_max = 50
    seed = 0
    cadence = 20

    [spectrum]
    tau = 17.34
    padding = 4

    [units]
    system = omega0         ; omega0 | thz | cm-1
    omega0_thz = 34.5       ; omega0 / 2 pi, used for thz and cm-1

Energies in ``thz`` are ordinary frequencies (nu = E/h) in THz, in ``cm-1``
wavenumbers; times are then given in femtoseconds.  Everything is converted
to units of ``omega0`` (and ``1/omega0`` for times) on load.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from paces.engine import InitialState, RunConfig
from paces.models import HolsteinParams, LatticeGeometry, ModelSpec, SpinLatticeParams
from paces.propagator import PropagatorConfig
from paces.spectra import SpectrumConfig

SPEED_OF_LIGHT_CM_PER_S = 2.99792458e10
DEFAULT_OMEGA0_THZ = 34.5

KNOWN = {
    "model": {"model", "extents", "eps", "j", "omega0", "g", "d_pho", "v", "h", "wordsize"},
    "initial": {"kind", "site", "occupations", "amplitudes"},
    "run": {"m_init", "m", "q_nom", "dt", "t_max", "seed", "cadence", "rtol", "max_order",
            "substeps", "future_weight"},
    "spectrum": {"tau", "padding", "omega_min", "omega_max", "reference", "per_chromophore"},
    "units": {"system", "omega0_thz", "omega0_cm"},
}


class ConfigError(ValueError):
    """Validation failure; ``problems`` lists every offending key."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


class _Reader:
    def __init__(self, parser: configparser.ConfigParser):
        self.p = parser
        self.problems: list[str] = []

    def get(self, section, key, conv, default=None, required=False):
        if not self.p.has_option(section, key):
            if required:
                self.problems.append(f"[{section}] {key}: missing")
            return default
        raw = self.p.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            self.problems.append(f"[{section}] {key} = {raw!r}: {exc}")
            return default


def _floats(raw: str):
    vals = [float(x) for x in raw.replace(";", ",").split(",") if x.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals[0] if len(vals) == 1 else vals


def _extents(raw: str):
    parts = raw.lower().replace("×", "x").replace(",", "x").split("x")
    ext = tuple(int(p) for p in parts if p.strip())
    if not 1 <= len(ext) <= 3 or any(e < 1 for e in ext):
        raise ValueError("need 1-3 positive extents")
    return ext


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _rows(raw: str):
    return [[int(x) for x in row.replace(",", " ").split()] for row in raw.split("|") if row.strip()]


def _complexes(raw: str):
    return [complex(x.strip().replace(" ", "")) for x in raw.split(",") if x.strip()]


class Units:
    """Conversion of energies and times to omega0 units."""

    def __init__(self, system: str = "omega0", omega0_thz: float = DEFAULT_OMEGA0_THZ):
        system = system.lower()
        if system not in ("omega0", "thz", "cm-1"):
            raise ValueError(f"unknown unit system {system!r}")
        self.system = system
        self.omega0_thz = omega0_thz

    @property
    def omega0_rad_per_fs(self) -> float:
        return 2 * math.pi * self.omega0_thz * 1e-3

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        if self.system == "thz":
            x = x / self.omega0_thz
        elif self.system == "cm-1":
            x = x * SPEED_OF_LIGHT_CM_PER_S * 1e-12 / self.omega0_thz
        return float(x) if x.ndim == 0 else x.tolist()

    def time(self, t):
        if self.system == "omega0" or t is None:
            return t
        return float(t) * self.omega0_rad_per_fs


def load_config(path) -> tuple[RunConfig, SpectrumConfig, dict]:
    """Parse and validate a configuration file.

    Returns the run configuration, the spectrum configuration and a flat
    dictionary of the resolved values for provenance headers.
    """
    text = Path(path).read_text()
    return parse_config(text)


def parse_config(text: str) -> tuple[RunConfig, SpectrumConfig, dict]:
    p = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    p.optionxform = str.lower
    p.read_string(text)
    r = _Reader(p)

    for section in p.sections():
        if section not in KNOWN:
            r.problems.append(f"[{section}]: unknown section")
            continue
        for key in p.options(section):
            if key not in KNOWN[section]:
                r.problems.append(f"[{section}] {key}: unknown key")

    system = r.get("units", "system", str, "omega0")
    thz = r.get("units", "omega0_thz", float, None)
    cm = r.get("units", "omega0_cm", float, None)
    if thz is None:
        thz = cm * SPEED_OF_LIGHT_CM_PER_S * 1e-12 if cm else DEFAULT_OMEGA0_THZ
    try:
        units = Units(system, thz)
    except ValueError as exc:
        r.problems.append(f"[units] system: {exc}")
        units = Units()

    kind = r.get("model", "model", str, None, required=True)
    extents = r.get("model", "extents", _extents, None, required=True)
    wordsize = r.get("model", "wordsize", int, 32)
    params = None
    if kind in ("holstein", "tb"):
        params = HolsteinParams(
            eps=units.energy(r.get("model", "eps", _floats, 0.0)),
            J=units.energy(r.get("model", "j", _floats, 1.0)),
            omega0=units.energy(r.get("model", "omega0", _floats, 1.0)),
            g=units.energy(r.get("model", "g", _floats, 0.0)),
            d_pho=r.get("model", "d_pho", int, 1),
        )
        if params.d_pho < 1:
            r.problems.append(f"[model] d_pho = {params.d_pho}: must be >= 1")
    elif kind == "spin":
        params = SpinLatticeParams(
            v=units.energy(r.get("model", "v", _floats, 1.0)),
            h=units.energy(r.get("model", "h", _floats, 0.0)),
        )
    elif kind is not None:
        r.problems.append(f"[model] model = {kind!r}: expected holstein, tb or spin")

    site_raw = r.get("initial", "site", str, "center")
    site = None
    if site_raw and site_raw.strip().lower() != "center":
        try:
            site = int(site_raw)
        except ValueError:
            r.problems.append(f"[initial] site = {site_raw!r}: expected an integer or 'center'")
    initial = InitialState(
        kind=r.get("initial", "kind", str, "localized"),
        site=site,
        occupations=r.get("initial", "occupations", _rows, None),
        amplitudes=r.get("initial", "amplitudes", _complexes, None),
    )
    if initial.kind not in ("localized", "optical", "explicit"):
        r.problems.append(f"[initial] kind = {initial.kind!r}: expected localized, optical or explicit")

    dt = units.time(r.get("run", "dt", float, 0.05))
    prop_kwargs = dict(
        dt=dt,
        rtol=r.get("run", "rtol", float, 1e-15),
        max_order=r.get("run", "max_order", int, 200),
        substeps=r.get("run", "substeps", int, 1),
    )
    run_kwargs = dict(
        m_init=r.get("run", "m_init", int, 2),
        m=r.get("run", "m", int, 2),
        q_nom=r.get("run", "q_nom", lambda s: int(float(s)), 10_000),
        t_max=units.time(r.get("run", "t_max", float, 1.0)),
        seed=r.get("run", "seed", int, 0),
        cadence=r.get("run", "cadence", int, 1),
        future_weight=r.get("run", "future_weight", float, 0.0),
    )
    tau = r.get("spectrum", "tau", float, math.inf)
    spec_kwargs = dict(
        tau=units.time(tau) if math.isfinite(tau) else tau,
        padding=r.get("spectrum", "padding", int, 4),
        omega_min=r.get("spectrum", "omega_min", float, None),
        omega_max=r.get("spectrum", "omega_max", float, None),
        reference=r.get("spectrum", "reference", float, None),
        per_chromophore=r.get("spectrum", "per_chromophore", _bool, True),
    )

    prop = run_cfg = spec_cfg = None
    try:
        prop = PropagatorConfig(**prop_kwargs)
    except ValueError as exc:
        r.problems.append(f"[run] {exc}")
    if params is not None and extents is not None:
        try:
            model = ModelSpec(kind, LatticeGeometry(extents), params, wordsize)
            # validate run keys even when the propagator keys were bad
            run_cfg = RunConfig(model=model, initial=initial,
                                propagator=prop or PropagatorConfig(), **run_kwargs)
        except ValueError as exc:
            r.problems.append(f"[run] {exc}")
    if spec_kwargs["reference"] is None:
        # bare transition: mean onsite energy
        eps = getattr(params, "eps", 0.0)
        spec_kwargs["reference"] = float(np.mean(eps))
    try:
        spec_cfg = SpectrumConfig(**spec_kwargs)
    except ValueError as exc:
        r.problems.append(f"[spectrum] {exc}")

    if r.problems:
        raise ConfigError(r.problems)
    return run_cfg, spec_cfg, resolved_dict(run_cfg, spec_cfg)


def resolved_dict(run_cfg: RunConfig, spec_cfg: SpectrumConfig) -> dict:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        if isinstance(obj, complex):
            return [obj.real, obj.imag]
        if isinstance(obj, float) and not math.isfinite(obj):
            return str(obj)
        if isinstance(obj, np.generic):
            return obj.item()
        return obj

    return clean({"run": asdict(run_cfg), "spectrum": asdict(spec_cfg)})
