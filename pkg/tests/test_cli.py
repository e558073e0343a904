import csv
import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from neumann_bismut import cli
from neumann_bismut.config import OUTPUT_ENV, ConfigError, ExperimentConfig, load_config
from neumann_bismut.transport import NumericalAbort

QUICK = ["--model", "half_line", "--f", "sq", "--x0", "0.5", "--T", "0.5", "--N", "3000",
         "--dt", "0.01", "--seed", "7"]


def _rows(text):
    lines = text.splitlines()
    assert lines[0] == "#schema=1"
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_estimate_and_oracle(capsys):
    assert cli.main(["estimate", *QUICK, "--formula", "hess"]) == 0
    est = _rows(capsys.readouterr().out)[0]
    assert cli.main(["oracle", *QUICK, "--formula", "hess"]) == 0
    orc = _rows(capsys.readouterr().out)[0]
    assert float(orc["value"]) == pytest.approx(2.0, abs=1e-6)
    assert est["formula"] == "hess" and int(est["n_samples"]) == 3000


def test_json_output(capsys):
    assert cli.main(["oracle", *QUICK, "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data[0]["value"] == pytest.approx(0.75)


def test_reproducible_bytes_across_threads(tmp_path):
    outs = []
    for th in (1, 4):
        path = tmp_path / f"t{th}.csv"
        assert cli.main(["estimate", *QUICK, "--formula", "grad14", "--threads", str(th),
                         "--reproducible", "--output", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert cli.main(["stein", "--sweep", "c2=2"]) == 0
    assert (tmp_path / "stein.csv").exists()
    assert cli.main(["oracle", *QUICK, "--output", "sub/o.csv"]) == 0
    assert (tmp_path / "sub" / "o.csv").exists()


@pytest.mark.parametrize("argv", [
    ["estimate", "--model", "torus"],
    ["estimate", "--model", "half_space_2d", "--x0", "0.1"],
    ["estimate", "--f", "sine"],
    ["estimate", "--T", "-1"],
    ["estimate", "--model", "hemisphere", "--x0", "0,0", "--drift", "1"],
    ["stein", "--sweep", "c2=-1"],
    ["stein", "--sweep", "K=1"],
    ["validate-geometry", "--model", "torus"],
])
def test_config_errors_exit_1(argv, capsys):
    assert cli.main(argv) == 1
    assert "config error" in capsys.readouterr().err


def test_config_file_errors_name_the_line(tmp_path, capsys):
    p = tmp_path / "run.cfg"
    p.write_text("model = half_line\n# comment\nbogus = 3\n")
    assert cli.main(["estimate", "--config", str(p)]) == 1
    assert f"{p}:3" in capsys.readouterr().err
    p.write_text("model = half_line\nN = many\n")
    with pytest.raises(ConfigError) as exc:
        load_config(str(p))
    assert exc.value.where == f"{p}:2"


def test_config_file_with_flag_override(tmp_path, capsys):
    p = tmp_path / "run.cfg"
    p.write_text("model = half_line\nf = sq\nx0 = 0.3\nT = 1\nformula = semigroup\n")
    assert cli.main(["oracle", "--config", str(p), "--x0", "0.0"]) == 0
    assert float(_rows(capsys.readouterr().out)[0]["value"]) == pytest.approx(1.0, abs=1e-9)


def test_failed_check_exits_2(monkeypatch):
    from neumann_bismut import bounds

    monkeypatch.setattr(bounds, "run_suite", lambda *a, **k: [bounds.BoundReport("b", "c", 2.0, 1.0)])
    assert cli.main(["verify-bounds"]) == 2


def test_numerical_abort_exits_3(monkeypatch):
    def boom(cfg):
        raise NumericalAbort("overflow in Q")

    monkeypatch.setattr(cli, "run_estimate", boom)
    assert cli.main(["estimate", *QUICK]) == 3


def test_validate_geometry_and_stein(capsys):
    assert cli.main(["validate-geometry", "--model", "disk", "--points", "40"]) == 0
    assert all(r["passed"] == "true" for r in _rows(capsys.readouterr().out))
    assert cli.main(["stein"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert len(rows) == 5 and all(r["passed"] == "true" for r in rows)


def test_dump_paths(tmp_path):
    trace = tmp_path / "paths.bin"
    assert cli.main(["estimate", *QUICK, "--dump-paths", f"3:{trace}"]) == 0
    assert trace.read_bytes()[:4] == b"NBTR"


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10**6), st.floats(1e-4, 10.0), st.integers(0, 2**31))
def test_config_roundtrip_via_update(N, T, seed):
    cfg = ExperimentConfig()
    cfg.update("N", str(N))
    cfg.update("T", repr(T))
    cfg.update("seed", str(seed))
    cfg.validate()
    assert (cfg.N, cfg.T, cfg.seed) == (N, T, seed)
