import filecmp
from pathlib import Path

import pytest

from divsolve import cli
from divsolve.config import ConfigError, load_config, parse_config_text
from divsolve.errors import FailedTransversality, IllConditioned

ROTATION = """
[grid]
nx = 16
ny = 16
[fields]
a = rotation
f = 1 + sin(2*pi*x)
[output]
formats = csv, svg
"""


def _write(tmp_path, text, name="config.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _files(d):
    return sorted(p.name for p in Path(d).iterdir())


def test_solve_rotation(tmp_path, capsys):
    cfg = _write(tmp_path, ROTATION)
    out = tmp_path / "run"
    assert cli.main(["solve", str(cfg), "--out", str(out)]) == cli.EXIT_OK
    assert {"u_x.csv", "u_y.csv", "residual.csv", "certificate.txt", "decomposition.txt",
            "gradient.txt", "config.txt", "solution.svg"} <= set(_files(out))
    cert = dict(line.split(" = ") for line in (out / "certificate.txt").read_text().splitlines())
    assert float(cert["residual"]) <= 1e-8 and cert["ok"] == "true"
    header, first = (out / "u_x.csv").read_text().splitlines()[:2]
    assert header == "i,j,value" and first == "0,0,0"
    assert "FAIL" not in (out / "decomposition.txt").read_text()
    assert (out / "solution.svg").read_text().startswith("<svg")


def test_csv_is_lf_and_17_digits(tmp_path):
    cfg = _write(tmp_path, ROTATION)
    cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")])
    raw = (tmp_path / "r" / "u_y.csv").read_bytes()
    assert b"\r" not in raw
    vals = [line.split(b",")[2] for line in raw.splitlines()[1:]]
    assert any(len(v.lstrip(b"-").replace(b".", b"").split(b"e")[0]) >= 16 for v in vals)


def test_determinism(tmp_path):
    cfg = _write(tmp_path, ROTATION)
    for name in ("a", "b"):
        assert cli.main(["solve", str(cfg), "--out", str(tmp_path / name)]) == 0
    names = _files(tmp_path / "a")
    assert names == _files(tmp_path / "b")
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors


def test_incompatible_gradient(tmp_path, capsys):
    cfg = _write(tmp_path, "[grid]\nnx = 32\nny = 32\n[fields]\npotential = x\nf = 1\n")
    code = cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")])
    assert code == cli.EXIT_INCOMPATIBLE
    err = capsys.readouterr().err
    assert "int e^A f" in err
    assert "GradientFieldIncompatible" in (tmp_path / "r" / "error.txt").read_text()


def test_compatibilized_gradient(tmp_path):
    cfg = _write(tmp_path, "[grid]\nnx = 32\nny = 32\n[fields]\npotential = x\nf = 1\n"
                           "compatibilize = true\n")
    assert cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")]) == cli.EXIT_OK
    text = (tmp_path / "r" / "certificate.txt").read_text()
    assert "branch = gradient" in text


def test_gradient_rejected_on_request(tmp_path):
    cfg = _write(tmp_path, "[fields]\na_x = 1\na_y = 0\n[solver]\ngradient = reject\n"
                           "[grid]\nnx = 8\nny = 8\n")
    assert cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")]) == cli.EXIT_GRADIENT


@pytest.mark.parametrize("text, key", [
    ("[grid]\nnx = two\n", "grid.nx"),
    ("[grid]\nnx = 1\n", "grid.nx"),
    ("[fields]\nf = sin(x\n", "fields.f"),
    ("[solver]\nsvd_tol = 2\n", "solver.svd_tol"),
    ("[solver]\nseed = -1\n", "solver.seed"),
    ("[solver]\ncolour = red\n", "solver.colour"),
    ("[fields]\na = vortex\n", "fields.a"),
    ("[sweep]\nsteps = 0\n", "sweep.steps"),
    ("[mystery]\nx = 1\n", "mystery"),
])
def test_config_errors(tmp_path, capsys, text, key):
    cfg = _write(tmp_path, text)
    assert cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")]) == cli.EXIT_CONFIG
    assert key in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert cli.main(["solve", str(tmp_path / "nope.txt")]) == cli.EXIT_CONFIG


def test_usage_error():
    assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG


def test_domain_error_in_field(tmp_path, capsys):
    cfg = _write(tmp_path, "[grid]\nnx = 4\nny = 4\n[fields]\nf = ln(x - 1)\n")
    assert cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")]) == cli.EXIT_CONFIG
    assert "cell (0, 0)" in capsys.readouterr().err


def test_exit_codes_for_numerical_failures(tmp_path, monkeypatch):
    assert cli.exit_code_for(FailedTransversality("x")) == cli.EXIT_TRANSVERSALITY
    assert cli.exit_code_for(IllConditioned("x", 1e13)) == cli.EXIT_ILL_CONDITIONED

    def boom(*args, **kwargs):
        raise FailedTransversality("no transversal bump")

    monkeypatch.setattr(cli, "solve", boom)
    cfg = _write(tmp_path, ROTATION)
    assert cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")]) == cli.EXIT_TRANSVERSALITY
    assert (tmp_path / "r" / "error.txt").exists()


def test_sweep_finds_singular_scaling(tmp_path):
    cfg = _write(tmp_path, "[grid]\nnx = 12\nny = 12\n[fields]\na = odd_shear\n")
    out = tmp_path / "sw"
    assert cli.main(["sweep", str(cfg), "--t-max", "20", "--steps", "200", "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0] == "t,sigma_min_ratio,sigma_excess_ratio,dim_n,marked"
    marked = [r.split(",") for r in rows[1:] if r.endswith(",1")]
    assert len(marked) == 1 and int(marked[0][3]) >= 2 and float(marked[0][2]) <= 1e-8
    assert len(rows) == 1 + 201 + 1
    assert "ok = true" in (out / "certificate_tstar.txt").read_text()
    assert "FAIL" not in (out / "decomposition_tstar.txt").read_text()


def test_sweep_without_real_scaling(tmp_path, capsys):
    cfg = _write(tmp_path, "[grid]\nnx = 8\nny = 8\n[fields]\na = rotation\n")
    out = tmp_path / "sw"
    assert cli.main(["sweep", str(cfg), "--t-max", "5", "--steps", "10", "--out", str(out)]) == 0
    assert (out / "singular.txt").read_text().startswith("t_star = none")
    assert not (out / "certificate_tstar.txt").exists()
    assert "no singular scaling" in capsys.readouterr().out


def test_sweep_rejects_gradient_base(tmp_path):
    cfg = _write(tmp_path, "[grid]\nnx = 6\nny = 6\n[fields]\na = zero\n")
    assert cli.main(["sweep", str(cfg), "--out", str(tmp_path / "sw")]) == cli.EXIT_GRADIENT


def test_sweep_zero_steps(tmp_path):
    cfg = _write(tmp_path, "[grid]\nnx = 6\nny = 6\n")
    assert cli.main(["sweep", str(cfg), "--steps", "0", "--out", str(tmp_path / "s")]) == 2


def test_sweep_determinism(tmp_path):
    cfg = _write(tmp_path, "[grid]\nnx = 10\nny = 10\n[fields]\na = odd_shear\n"
                           "[sweep]\nt_max = 25\nsteps = 50\n")
    for name in ("a", "b"):
        cli.main(["sweep", str(cfg), "--out", str(tmp_path / name)])
    names = _files(tmp_path / "a")
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors


def test_exponents_bootstrap(tmp_path, capsys):
    csv = tmp_path / "boot.csv"
    assert cli.main(["exponents", "bootstrap", "3/2", "4", "3", "--csv", str(csv)]) == 0
    out = capsys.readouterr().out
    assert "k0 = 3" in out
    assert [r.split(",")[1] for r in csv.read_text().splitlines()[1:]] == \
        ["3/2", "12/7", "2", "12/5", "3"]


def test_exponents_multiplier(capsys):
    assert cli.main(["exponents", "multiplier", "2", "4", "3", "1", "0"]) == 0
    assert "admissible = true" in capsys.readouterr().out


def test_exponents_errors(capsys):
    assert cli.main(["exponents", "bootstrap", "2", "3", "3"]) == cli.EXIT_CONFIG
    assert "q > n" in capsys.readouterr().err
    assert cli.main(["exponents", "multiplier", "2", "2", "3", "1", "2"]) == cli.EXIT_CONFIG
    assert cli.main(["exponents", "conjugate", "3", "3"]) == cli.EXIT_CONFIG


def test_report(tmp_path, capsys):
    cfg = _write(tmp_path, ROTATION)
    cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")])
    capsys.readouterr()
    assert cli.main(["report", str(tmp_path / "r")]) == 0
    assert "== certificate.txt" in capsys.readouterr().out
    assert cli.main(["report", str(tmp_path / "empty_missing")]) == cli.EXIT_CONFIG


def test_written_config_reparses(tmp_path):
    cfg = _write(tmp_path, ROTATION)
    cli.main(["solve", str(cfg), "--out", str(tmp_path / "r")])
    again = parse_config_text((tmp_path / "r" / "config.txt").read_text())
    first = load_config(cfg)
    assert again.fields == first.fields and again.solver == first.solver
    assert again.grid == first.grid


def test_output_dir_relative_to_config(tmp_path):
    sub = tmp_path / "cfgs"
    sub.mkdir()
    cfg = _write(sub, "[output]\ndirectory = runs/x\n")
    assert load_config(cfg).output.directory == str(sub / "runs/x")


def test_preset_and_components_conflict():
    with pytest.raises(ConfigError):
        parse_config_text("[fields]\na = rotation\na_x = 1\n")
