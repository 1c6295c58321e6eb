import json
import os
import subprocess
import sys

import numpy as np
import pytest

from nvecho import cli
from nvecho.config import Config, ConfigError, parse_override
from nvecho.io import OutputError, emit_csv, emit_json, load_manifest, read_csv
from nvecho.params import NVParams
from nvecho.spectrum import spectrum_table

SMALL = ["grid.M_delta=41", "coupling.M_g=3", "coupling.n_psi=8", "distributions.n_panels=32",
         "sequence.theta_times=2.0 3.4", "sequence.theta_phases=-45 45", "sequence.refocus_time=8 us"]


def _run(tmp_path, *argv):
    return cli.main(list(argv) + ["-o", str(tmp_path)])


def _small(*extra):
    out = []
    for s in SMALL + list(extra):
        out += ["--set", s]
    return out


def test_config_preset_and_hash():
    a = Config("preset:default")
    b = Config("preset:default", ["cavity.Q=160"])
    assert a.hash() != b.hash()
    assert b.cavity().kappa == pytest.approx(0.5 * a.cavity().kappa)
    assert b.overrides == {"cavity.Q": "160"}
    with pytest.raises(ConfigError):
        parse_override("cavity.Q")
    with pytest.raises(ConfigError):
        Config("preset:nonesuch")


def test_spectrum_csv_matches_library(tmp_path):
    assert _run(tmp_path, "spectrum") == 0
    table, _ = read_csv(tmp_path / "spectrum.csv")
    B = table["B_NV_mT"] * 1e-3
    ex = spectrum_table(B, NVParams(), "non_orth")
    assert np.allclose(table["mI+1_plus_MHz"], ex[:, 5] / (2 * np.pi) * 1e-6, rtol=1e-14, atol=0)
    assert len(table) == 13


def test_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(a, "spectrum") == 0 and _run(b, "spectrum") == 0
    assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()


def test_manifest_records_overrides(tmp_path):
    assert _run(tmp_path, "spectrum", "--set", "cavity.Q=160", "--set", "spectrum.n_B=3") == 0
    man = load_manifest(tmp_path / "manifest.json")
    assert man["overrides"] == {"cavity.Q": "160", "spectrum.n_B": "3"}
    assert man["subcommand"] == "spectrum" and man["outputs"] == ["spectrum.csv"]
    assert len(man["config_hash"]) == 64
    assert man["backend"] in ("numba", "numpy")


def test_usage_errors_exit_2(tmp_path, capsys):
    assert _run(tmp_path, "spectrum", "-c", str(tmp_path / "missing.ini")) == 2
    assert _run(tmp_path, "spectrum", "--set", "spectrum.n_B=abc") == 2
    assert _run(tmp_path, "spectrum", "--set", "spectrum.B_max=3 s") == 2
    assert _run(tmp_path, "deembed") == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["bogus"])


def test_reflect_deembed_round_trip(tmp_path):
    r, d = tmp_path / "r", tmp_path / "d"
    assert _run(r, "reflect", *_small()) == 0
    assert _run(d, "deembed", "--s11", str(r / "S11.csv"), "--s11-sat", str(r / "S11_sat.csv")) == 0
    K0, meta = read_csv(r / "K.csv")
    K1, _ = read_csv(d / "K.csv")
    k0 = K0["re"] + 1j * K0["im"]
    k1 = K1["re"] + 1j * K1["im"]
    assert meta["convention"] == "physics"
    assert np.max(np.abs(k1 - k0)) <= 1e-9 * np.max(np.abs(k0))


def test_simulate_and_echo(tmp_path):
    s, e = tmp_path / "s", tmp_path / "e"
    assert _run(s, "simulate", *_small("decoherence.T2A=", "integrator.tail=0.2 us"), "--snapshots", "5") == 0
    tr, _ = read_csv(s / "trace.csv")
    assert set(tr) == {"t_us", "Xc", "Pc", "aR_I", "aR_Q"}
    snaps, _ = read_csv(s / "snapshots.csv")
    assert np.all(snaps["t_us"] == pytest.approx(5.0, abs=1e-3))
    assert _run(e, "echo2pe", *_small()) == 0
    rep = json.loads((e / "echo_report.json").read_text())
    assert len(rep["echoes"]) == 2 and rep["prefactor"] > 0
    assert 0 <= rep["bi_T2_diagnostic"]
    eff, _ = read_csv(e / "efficiency.csv")
    assert np.allclose(eff["two_tau_us"], [12.0, 9.2])


def test_sweep_kind_checked(tmp_path):
    assert _run(tmp_path, "sweep", *_small("sweep.kind=frequency")) == 2


def test_csv_and_json_reject_nan(tmp_path):
    with pytest.raises(OutputError):
        emit_csv({"a": [1.0, np.nan]}, tmp_path / "x.csv")
    with pytest.raises(OutputError):
        emit_csv({"a": [1.0], "b": [1.0, 2.0]}, tmp_path / "x.csv")
    with pytest.raises(OutputError):
        emit_json({"a": float("inf")}, tmp_path / "x.json")


def test_csv_round_trip_is_exact(tmp_path):
    x = np.random.default_rng(0).normal(size=50) * 1e-7
    emit_csv({"x": x, "y": -x}, tmp_path / "t.csv", meta={"note": "ok", "scale": 1 / 3})
    t, meta = read_csv(tmp_path / "t.csv")
    assert np.array_equal(t["x"], x) and np.array_equal(t["y"], -x)
    assert float(meta["scale"]) == 1 / 3 and meta["note"] == "ok"


def test_results_independent_of_thread_count(tmp_path):
    outs = []
    for n in ("1", "4"):
        d = tmp_path / n
        env = dict(os.environ, NVECHO_THREADS=n)
        subprocess.run([sys.executable, "-m", "nvecho.cli", "coupling", "--set", "coupling.n_psi=8", "-o", str(d)],
                       check=True, env=env, capture_output=True)
        outs.append((d / "coupling.csv").read_bytes())
    assert outs[0] == outs[1]
