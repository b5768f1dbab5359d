import json

import numpy as np
import pytest

from ernwave.config import parse_config_text
from ernwave.diagnostics import read_records_csv
from ernwave.runner import convergence_suite, report, run

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


@pytest.fixture(scope="module")
def small_cfg():
    return parse_config_text(SMALL)


def test_run_writes_manifest_and_traces(small_cfg, tmp_path):
    out = run(small_cfg, tmp_path).manifest
    assert out.status == "completed" and out.exit_status == 0
    assert set(out.outputs) >= {"config.ini", "horizon.csv", "energy.csv", "norms.csv", "manifest.json"}
    for name in out.outputs:
        assert (tmp_path / name).is_file()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config_hash"] == out.config_hash
    assert man["summary"]["final_t_star"] == pytest.approx(20.0)
    hz = read_records_csv(tmp_path / "horizon.csv")
    assert len(hz) == 21
    assert parse_config_text((tmp_path / "config.ini").read_text()) == small_cfg


def test_run_is_deterministic(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    ma, mb = run(small_cfg, a).manifest, run(small_cfg, b).manifest
    assert ma.config_hash == mb.config_hash
    for name in ("horizon.csv", "energy.csv", "norms.csv", "config.ini"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_zero_amplitude_gives_zero_traces(small_cfg, tmp_path):
    cfg = small_cfg.with_evolution(amplitude=0.0)
    m = run(cfg, tmp_path).manifest
    assert m.exit_status == 0
    for name in ("horizon.csv", "energy.csv", "norms.csv"):
        for rec in read_records_csv(tmp_path / name):
            vals = [v for k, v in vars(rec).items() if k not in ("t_star", "v")]
            assert all(v == 0.0 for v in vals), (name, rec)


def test_snapshots_written(small_cfg, tmp_path):
    from dataclasses import replace

    cfg = replace(small_cfg, output=replace(small_cfg.output, snapshot_every=5))
    m = run(cfg, tmp_path).manifest
    snaps = sorted((tmp_path / "snapshots").glob("*.csv"))
    assert len(snaps) == 5
    assert all(f"snapshots/{p.name}" in m.outputs for p in snaps)


def test_nan_fault_is_numerical_failure(small_cfg, tmp_path):
    from dataclasses import replace

    cfg = replace(small_cfg, fault=replace(small_cfg.fault, kind="nan", t_star=3.0))
    m = run(cfg, tmp_path).manifest
    assert m.status == "numerical_failure" and m.exit_status == 3
    assert "failure" in m.summary


def test_run_rejects_invalid_config(small_cfg):
    with pytest.raises(ValueError):
        run(small_cfg.with_evolution(amplitude=-0.1))


def test_convergence_suite_orders(small_cfg):
    rep = convergence_suite(small_cfg, levels=3)
    assert rep.n_r == [201, 401, 801]
    assert all(abs(o - 4.0) <= 0.3 for o in rep.mms_orders)
    assert min(rep.h0_orders) >= 3.5
    assert not rep.degenerate
    assert not any(f.startswith(("mms", "h0_drift")) for f in rep.flags)


def test_convergence_suite_parallel_matches_serial(small_cfg):
    cfg = small_cfg.with_evolution(t_star_end=5.0)
    a = convergence_suite(cfg, levels=2, workers=1)
    b = convergence_suite(cfg, levels=2, workers=2)
    assert a.as_dict() == b.as_dict()


def test_convergence_suite_zero_data(small_cfg):
    rep = convergence_suite(small_cfg.with_evolution(amplitude=0.0, t_star_end=5.0), levels=3)
    assert rep.degenerate
    assert rep.h0_drift == [0.0, 0.0, 0.0] and rep.self_differences == [0.0, 0.0]
    assert rep.notes == []


def test_convergence_suite_needs_two_levels(small_cfg):
    with pytest.raises(ValueError):
        convergence_suite(small_cfg, levels=1)


def test_report_markdown(small_cfg, tmp_path):
    cfg = small_cfg.with_evolution(t_star_end=60.0)
    run(cfg, tmp_path)
    text = report(tmp_path)
    assert text.startswith("# Run summary")
    for heading in ("## Horizon", "## Decay of sup norms", "## Energies"):
        assert heading in text
    assert "E_T <= E_P <= E_N on every slice: True" in text
    assert np.isfinite(float(text.split("| H0 | ")[1].split(" ")[0]))
