import numpy as np
import pytest

from paces.engine import InitialState, RunConfig
from paces.models import HolsteinParams, LatticeGeometry, ModelSpec, SpinLatticeParams, build_model
from paces.propagator import PropagatorConfig

ACCEPTANCE_LINES: list[str] = []


def holstein_spec(extents, d_pho, g=1.0, J=1.0, eps=0.0, omega0=1.0, kind="holstein"):
    if isinstance(extents, int):
        extents = (extents,)
    return ModelSpec(kind, LatticeGeometry(tuple(extents)),
                     HolsteinParams(eps=eps, J=J, omega0=omega0, g=g, d_pho=d_pho))


def spin_spec(extents, v=1.0, h=0.0):
    if isinstance(extents, int):
        extents = (extents,)
    return ModelSpec("spin", LatticeGeometry(tuple(extents)), SpinLatticeParams(v=v, h=h))


def run_config(spec, *, initial="localized", m_init=2, m=2, q_nom=10_000, dt=0.05, t_max=1.0,
               seed=0, cadence=1, threads=1):
    init = initial if isinstance(initial, InitialState) else InitialState(initial)
    return RunConfig(model=spec, initial=init, m_init=m_init, m=m, q_nom=q_nom,
                     propagator=PropagatorConfig(dt=dt), t_max=t_max, seed=seed,
                     cadence=cadence, threads=threads)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def dimer_terms():
    return build_model(holstein_spec(2, 3, g=0.7, J=0.4))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
