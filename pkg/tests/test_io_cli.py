import json
import math
import struct
from pathlib import Path

import numpy as np
import pytest

from conftest import holstein_spec
from paces import cli, io
from paces.codec import PackedBasisTable, SiteLayout
from paces.config import ConfigError, Units, parse_config
from paces.subspace import MEMORY_ENV, SparseState

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[model]
model = holstein
extents = 3
J = 1
g = 1
d_pho = 3

[initial]
kind = localized

[run]
m_init = 2
m = 2
q_nom = 40
dt = 0.05
t_max = {t_max}
cadence = 5
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _csv_body(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# config: ")
    return lines


# -- checkpoints -------------------------------------------------------------------


def test_checkpoint_layout(tmp_path):
    lay = SiteLayout((3, 4, 4, 4), 16)
    table = PackedBasisTable.from_occupations([[0, 1, 2, 3], [2, 0, 0, 1]], lay)
    st = SparseState(table, np.array([0.6, 0.8j]), 2.5)
    path = tmp_path / "c.bin"
    io.write_checkpoint(path, st)
    raw = path.read_bytes()
    assert raw[:6] == io.MAGIC
    assert struct.unpack_from("<BI", raw, 6) == (16, 4)
    assert np.frombuffer(raw, "<u4", 4, 11).tolist() == [3, 4, 4, 4]
    assert struct.unpack_from("<Q", raw, 27) == (2,)
    assert len(raw) == 6 + 5 + 16 + 8 + 2 * 2 + 2 * 16 + 8
    back = io.read_checkpoint(path)
    np.testing.assert_array_equal(back.table.words, table.words)
    np.testing.assert_array_equal(back.coefficients, st.coefficients)
    assert back.t == 2.5
    assert not (tmp_path / "c.bin.tmp").exists()


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOTACHECKPOINT")
    with pytest.raises(io.CheckpointError):
        io.read_checkpoint(p)
    lay = SiteLayout((2, 2))
    st = SparseState(PackedBasisTable.from_occupations([[1, 0]], lay), np.ones(1, complex), 0.0)
    io.write_checkpoint(p, st)
    p.write_bytes(p.read_bytes() + b"\0")
    with pytest.raises(io.CheckpointError):
        io.read_checkpoint(p)


# -- configuration -------------------------------------------------------------------


def test_parse_small_config():
    run_cfg, spec_cfg, resolved = parse_config(SMALL.format(t_max=1))
    assert run_cfg.model.geometry.extents == (3,)
    assert run_cfg.model.params.d_pho == 3
    assert run_cfg.n_steps == 20
    assert spec_cfg.reference == 0.0
    json.dumps(resolved)


def test_parse_all_shipped_configs():
    files = sorted(CONFIGS.glob("*.ini"))
    assert len(files) >= 10
    for f in files:
        parse_config(f.read_text())


def test_physical_units():
    run_cfg, spec_cfg, _ = parse_config((CONFIGS / "dimer_H_thz.ini").read_text())
    p = run_cfg.model.params
    assert p.omega0 == pytest.approx(1.0)
    assert p.J == pytest.approx(0.55)
    assert p.g == pytest.approx(0.71)
    assert run_cfg.propagator.dt == pytest.approx(0.05, rel=1e-3)
    assert 1 / spec_cfg.tau == pytest.approx(0.0577, rel=1e-3)
    u = Units("cm-1")
    assert u.energy(1150.8) == pytest.approx(1.0, rel=1e-4)
    assert Units("thz").time(1000 / (2 * math.pi * 34.5)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Units("eV")


def test_config_errors_list_every_key():
    text = """
[model]
model = holstein
extents = 0x3
d_pho = two
colour = red
[run]
dt = -1
cadence = 0
[plot]
x = 1
"""
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = str(exc.value)
    for part in ("extents", "d_pho", "colour", "dt", "[plot]"):
        assert part in msg
    assert len(exc.value.problems) >= 5


def test_missing_required():
    with pytest.raises(ConfigError, match="model: missing"):
        parse_config("[model]\nextents = 3\n")


def test_spin_and_explicit_config():
    run_cfg, _, _ = parse_config((CONFIGS / "spin_3x3.ini").read_text())
    assert run_cfg.model.kind == "spin"
    assert run_cfg.initial.occupations == [[1, 0, 0, 0, 0, 0, 0, 0, 0]]


# -- command line --------------------------------------------------------------------


def test_dynamics_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL.format(t_max=0.5))
    out = tmp_path / "out"
    assert cli.main(["dynamics", "--config", str(cfg), "--out", str(out), "--histogram"]) == 0
    for name in ("diagnostics.csv", "observables.csv", "checkpoint.bin", "weights.csv"):
        assert (out / name).exists()
    diag = _csv_body(out / "diagnostics.csv")
    assert diag[1] == "step,t,norm_pre,norm_post,discarded_weight,delta_norm_expmv,energy,q_true,taylor_order"
    assert len(diag) == 2 + 10
    obs = _csv_body(out / "observables.csv")
    assert obs[1].startswith("t,norm,energy,rmsd,xbar,re_amp,im_amp,density_0")
    assert len(obs) == 2 + 3
    header = json.loads(obs[0][len("# config: "):])
    assert header["run"]["q_nom"] == 40
    assert "norm=" in capsys.readouterr().out


def test_t_max_zero_gives_initial_row(tmp_path):
    cfg = _write(tmp_path, SMALL.format(t_max=0))
    out = tmp_path / "out"
    assert cli.main(["dynamics", "--config", str(cfg), "--out", str(out)]) == 0
    obs = _csv_body(out / "observables.csv")
    assert len(obs) == 3
    assert obs[2].startswith("0.0,1.0,")
    assert len(_csv_body(out / "diagnostics.csv")) == 2


def test_rerun_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL.format(t_max=1))
    for d in ("a", "b"):
        assert cli.main(["dynamics", "--config", str(cfg), "--out", str(tmp_path / d),
                         "--deterministic", "--seed", "3"]) == 0
    for name in ("diagnostics.csv", "observables.csv", "checkpoint.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert '"seed": 3' in (tmp_path / "a" / "observables.csv").read_text().splitlines()[0]


def test_model_info_density_report(tmp_path, capsys):
    out = tmp_path / "info"
    assert cli.main(["model-info", "--config", str(CONFIGS / "info_L9_d5.ini"), "--out", str(out)]) == 0
    text = (out / "model_info.txt").read_text()
    assert "(< 1/4,000,000)" in text
    assert "Hilbert-space dimension: 17578125" in text
    assert "predicted nonzeros: 76953125" in text
    assert "order 2: 9" in text
    assert capsys.readouterr().out == text


def test_oracle_check_pass(tmp_path, capsys):
    out = tmp_path / "oc"
    assert cli.main(["oracle-check", "--config", str(CONFIGS / "oracle_L3.ini"), "--out", str(out)]) == 0
    report = (out / "oracle_check.txt").read_text()
    assert "result: PASS" in report
    assert "dimension: 192" in report


def test_oracle_check_fail_when_truncated(tmp_path):
    cfg = _write(tmp_path, SMALL.format(t_max=2).replace("q_nom = 40", "q_nom = 5"))
    out = tmp_path / "oc"
    assert cli.main(["oracle-check", "--config", str(cfg), "--out", str(out)]) == 1
    assert "result: FAIL" in (out / "oracle_check.txt").read_text()


def test_spectrum_from_run_and_from_csv(tmp_path):
    text = SMALL.format(t_max=5).replace("kind = localized", "kind = optical")
    text = text.replace("extents = 3", "extents = 2") + "\n[spectrum]\ntau = 17.331\n"
    cfg = _write(tmp_path, text)
    out = tmp_path / "sp"
    assert cli.main(["spectrum", "--config", str(cfg), "--out", str(out),
                     "--electronic-reference"]) == 0
    first = _csv_body(out / "spectrum.csv")
    assert first[1] == "omega_over_omega0,A"
    assert (out / "spectrum_electronic.csv").exists()
    out2 = tmp_path / "sp2"
    assert cli.main(["spectrum", "--config", str(cfg), "--out", str(out2),
                     "--observables", str(out / "observables.csv")]) == 0
    again = _csv_body(out2 / "spectrum.csv")
    a = np.array([list(map(float, r.split(","))) for r in first[2:]])
    b = np.array([list(map(float, r.split(","))) for r in again[2:]])
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "[model]\nmodel = holstein\nextents = 3\nwat = 1\n")
    assert cli.main(["dynamics", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "wat" in capsys.readouterr().err


def test_memory_cap_clean_error(tmp_path, monkeypatch, capsys):
    cfg = _write(tmp_path, SMALL.format(t_max=1))
    monkeypatch.setenv(MEMORY_ENV, "100")
    assert cli.main(["dynamics", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert MEMORY_ENV in capsys.readouterr().err


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        cli.main(["plot", "--config", "x", "--out", "y"])


def test_observables_roundtrip(tmp_path):
    from paces import engine
    from conftest import run_config
    res = engine.run(run_config(holstein_spec(2, 2, g=0.5), initial="optical", t_max=0.2))
    io.write_observables_csv(tmp_path / "o.csv", res.observables, 2, {"x": 1})
    t, amp = io.read_observables_csv(tmp_path / "o.csv")
    np.testing.assert_array_equal(t, res.times())
    np.testing.assert_array_equal(amp, res.amplitudes())
