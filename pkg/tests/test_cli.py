import json
import os

import pytest

from detscope.cli import (CACHE_ENV, EXIT_CONFIG, EXIT_DEPTH_LIMIT, EXIT_NOT_DIFFERENTIABLE,
                          EXIT_OK, ConfigError, RunConfig, ScanCache, dumps, main)
from detscope.potential import gaussian_well

ZERO = {"schema-version": 1, "potential": {"kind": "zero"}, "resolution": 16, "t-max": 4,
        "refinement": [[8, 3, 1], [12, 4, 1], [16, 5, 1]]}
GAUSS = {"schema-version": 1, "potential": {"kind": "gaussian-well", "depth": 2.0, "width": 1.0},
         "resolution": 16, "t-max": 3}


def _config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _run(tmp_path, command, doc, *extra):
    cfg = _config(tmp_path, doc)
    return main([command, "--config", cfg, "--out", str(tmp_path / "out"),
                 "--cache", str(tmp_path / "cache"), *extra])


@pytest.fixture(scope="module")
def zero_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("zero")
    codes = {c: _run(tmp, c, ZERO) for c in ("moments", "scan", "spectrum", "trace-check", "report")}
    return tmp, codes


def test_zero_potential_commands_succeed(zero_run):
    _, codes = zero_run
    assert set(codes.values()) == {EXIT_OK}


def test_zero_potential_residuals_vanish(zero_run):
    tmp, _ = zero_run
    rep = json.loads((tmp / "out" / "trace_report.json").read_text())
    assert rep["records"]
    assert all(r["abs_err"] == 0 and r["lhs"] == 0 for r in rep["records"].values())
    cat = json.loads((tmp / "out" / "catalog.json").read_text())
    assert cat["bound_states"] == [] and cat["resonances"] == []


def test_report_directory(zero_run):
    tmp, _ = zero_run
    plot = tmp / "out" / "plotdata"
    assert sorted(p.name for p in plot.iterdir()) == [
        "breit_wigner.csv", "resonances.csv", "scan.csv", "trace_residuals.csv"]
    assert (plot / "resonances.csv").read_text() == "re,im,multiplicity,ell\n"


def test_report_rerun_is_byte_identical(zero_run):
    tmp, _ = zero_run
    plot = tmp / "out" / "plotdata"
    before = {p.name: p.read_bytes() for p in plot.iterdir()}
    assert _run(tmp, "report", ZERO) == EXIT_OK
    assert {p.name: p.read_bytes() for p in plot.iterdir()} == before


def test_trace_report_round_trips(zero_run):
    tmp, _ = zero_run
    doc = json.loads((tmp / "out" / "trace_report.json").read_text())
    assert json.loads(dumps(doc)) == doc
    assert set(doc) == {"records", "levinson", "extra", "warnings"}


def test_config_errors(tmp_path):
    assert _run(tmp_path, "moments", {**ZERO, "schema-version": 99}) == EXIT_CONFIG
    assert _run(tmp_path, "moments", {**ZERO, "resolution": -3}) == EXIT_CONFIG
    assert _run(tmp_path, "moments", {**ZERO, "no-such-key": 1}) == EXIT_CONFIG
    assert main(["moments", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_square_well_alpha1_is_not_differentiable(tmp_path):
    doc = {"schema-version": 1, "potential": {"kind": "square-well", "depth": 4.0, "width": 1.0},
           "include-alpha1": True}
    assert _run(tmp_path, "moments", doc) == EXIT_NOT_DIFFERENTIABLE


def test_deep_region_is_refused(tmp_path):
    assert _run(tmp_path, "spectrum", {**GAUSS, "region": [-2, 2, -50, 0]}) == EXIT_DEPTH_LIMIT


def test_moments_output(tmp_path):
    assert _run(tmp_path, "moments", GAUSS) == EXIT_OK
    doc = json.loads((tmp_path / "out" / "moments.json").read_text())
    assert doc["alpha_0"] == pytest.approx(0.1566642671644357, rel=1e-9)
    assert json.loads((tmp_path / "out" / "config.json").read_text())["resolution"] == 16


def test_warm_cache_scan(tmp_path):
    assert _run(tmp_path, "scan", GAUSS) == EXIT_OK
    first = (tmp_path / "out" / "scan.csv").read_bytes()
    header = first.decode().splitlines()[0]
    assert header == "t,ReD,ImD,rho,phi,phi_sc,phi_B,rho_B,dphiB_dt"
    entries = sorted(p.name for p in (tmp_path / "cache").rglob("*") if p.is_file())
    assert entries
    assert _run(tmp_path, "scan", GAUSS) == EXIT_OK
    assert (tmp_path / "out" / "scan.csv").read_bytes() == first
    assert sorted(p.name for p in (tmp_path / "cache").rglob("*") if p.is_file()) == entries


def test_cache_precedence(tmp_path, monkeypatch):
    env_dir = tmp_path / "env-cache"
    monkeypatch.setenv(CACHE_ENV, str(env_dir))
    cfg = _config(tmp_path, {**GAUSS, "cache": str(tmp_path / "cfg-cache")})
    assert main(["moments", "--config", cfg, "--out", str(tmp_path / "o1")]) == EXIT_OK
    assert json.loads((tmp_path / "o1" / "config.json").read_text())["cache"] == str(env_dir)
    flag = tmp_path / "flag-cache"
    assert main(["moments", "--config", cfg, "--out", str(tmp_path / "o2"),
                 "--cache", str(flag)]) == EXIT_OK
    assert json.loads((tmp_path / "o2" / "config.json").read_text())["cache"] == str(flag)


def test_run_config_round_trip():
    cfg = RunConfig.from_dict(GAUSS)
    again = RunConfig.from_dict(json.loads(dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({**GAUSS, "scheme": "spherical"}).validate()


def test_scan_cache_mapping(tmp_path):
    ns = {"potential": gaussian_well(2.0).spec(), "resolution": 16}
    cache = ScanCache(tmp_path, ns)
    cache[1.5 + 0.25j] = 3 - 1j
    assert cache[1.5 + 0.25j] == 3 - 1j
    assert 1.5 + 0.25j in cache and len(cache) == 1
    other = ScanCache(tmp_path, {**ns, "resolution": 24})
    assert 1.5 + 0.25j not in other
    assert os.listdir(tmp_path)
