import json

import pytest

from ernwave.cli import main
from ernwave.config import ConfigError, RunConfig, parse_config, parse_config_text, serialize_config

SMALL = """
[foliation]
r_max = 410
[grid]
n_r = 201
horizon_spacing = 0.0008
growth = 0.2
slice_offset = 0.004
[evolution]
t_star_end = 20
"""


def test_empty_config_gives_defaults():
    cfg = parse_config_text("")
    assert cfg == RunConfig()
    assert cfg.params.mass == 1.0


def test_minimal_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[spacetime]\nmass = 1.0\n")
    assert parse_config(p) == RunConfig()


def test_split_radius_inside_photon_sphere():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[foliation]\nsplit_radius = 1.5\n")
    assert any("photon-sphere constraint violated" in e for e in exc.value.errors)


def test_negative_amplitude():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[evolution]\nepsilon = -0.1\n")
    assert any("amplitude" in e or "epsilon" in e for e in exc.value.errors)


def test_all_errors_are_listed():
    text = """
[foliation]
split_radius = 1.5
[evolution]
epsilon = -0.1
cfl = abc
[grid]
colour = red
[extra]
x = 1
"""
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    errs = exc.value.errors
    assert len(errs) >= 5
    joined = "\n".join(errs)
    for needle in ("photon-sphere", "cfl", "colour", "[extra]"):
        assert needle in joined


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "nope.ini")


def test_malformed_text():
    with pytest.raises(ConfigError, match="parse error"):
        parse_config_text("no section header\n")


@pytest.mark.parametrize("text", [
    "",
    SMALL,
    "[data]\nmodes = 0:1.0, 2:0.5\ng_center = 3.0\ng_width = 0.7\ng_modes = 1:2.0\n",
    "[coupling]\nkind = table\ntable = -1:0.5, 0:1.0, 1:0.5\n[evolution]\nepsilon = 0.0\n",
    "[coupling]\nkind = tanh\na0 = 2\n[output]\nsnapshot_every = 5\nenergies = no\n[fault]\nkind = nan\nt_star = 3\n",
    "[spacetime]\nmass = 2.0\n[foliation]\nsplit_radius = 12\nr_max = 800\n[grid]\nn_theta = 8\n",
])
def test_round_trip(text):
    cfg = parse_config_text(text)
    again = parse_config_text(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

@pytest.fixture()
def small_ini(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def test_cli_run_and_report(small_ini, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(small_ini), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "completed" and man["exit_status"] == 0
    for name in man["outputs"]:
        assert (out / name).is_file()
    assert main(["report", "--out", str(out)]) == 0
    text = (out / "report.md").read_text()
    assert "Horizon" in text or "horizon" in text


def test_cli_spike_fault_exits_2(tmp_path):
    p = tmp_path / "spike.ini"
    p.write_text(SMALL + "[fault]\nkind = spike\nt_star = 5\n")
    out = tmp_path / "spike"
    assert main(["run", "--config", str(p), "--out", str(out)]) == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "breakdown"
    assert man["summary"]["breakdown"]["t_star"] == pytest.approx(5.0)


def test_cli_nan_fault_exits_3(tmp_path):
    p = tmp_path / "nan.ini"
    p.write_text(SMALL + "[fault]\nkind = nan\nt_star = 3\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "nan")]) == 3


def test_cli_bad_config_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[foliation]\nsplit_radius = 1.5\n[evolution]\nepsilon = -0.1\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "photon-sphere" in err and "amplitude" in err


@pytest.mark.parametrize("argv", [
    ["run"],
    ["bogus", "--out", "x"],
    ["run", "--out", "x", "--workers", "0"],
    [],
])
def test_cli_usage_errors_exit_1(argv):
    assert main(argv) == 1


def test_cli_report_missing_dir(tmp_path):
    assert main(["report", "--out", str(tmp_path / "missing")]) == 1


def test_cli_converge(small_ini, tmp_path):
    out = tmp_path / "conv"
    assert main(["converge", "--config", str(small_ini), "--out", str(out), "--workers", "1"]) == 0
    rep = json.loads((out / "convergence.json").read_text())
    assert rep["n_r"] == [201, 401, 801]
    assert min(rep["mms_orders"]) >= 3.5
    assert min(rep["h0_orders"]) >= 3.5


def test_cli_ct_audit(tmp_path):
    out = tmp_path / "ct"
    assert main(["ct-audit", "--out", str(out)]) == 0
    assert json.loads((out / "ct_audit.json").read_text())["passed"]
