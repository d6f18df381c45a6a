"""CLI exit codes, config validation, artifact formats, determinism."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ergograph import __version__
from ergograph.cli import ExperimentConfig, main
from ergograph.fiber_family import ConfigError
from ergograph.geometry import GridSet

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def _write_cfg(tmp_path, payload, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


# ---------------------------------------------------------------------------
# exit codes


def test_sync_pass_exit_zero(tmp_path, capsys):
    rc = main(["sync", "--n", "20", "--out", str(tmp_path)])
    assert rc == 0
    assert "sync_test: PASS" in capsys.readouterr().out
    rep = json.loads((tmp_path / "sync_report.json").read_text())
    assert rep["exit_code"] == 0
    assert rep["reports"][0]["verdict"] == "PASS"
    assert rep["version"] == __version__


def test_uncovered_disk_exit_one(tmp_path):
    cfg = _write_cfg(tmp_path, {"grid_n": 128, "params": {
        "covering": {"center": [2.0, 0.0], "radius": 0.5}}})
    rc = main(["covering", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 1
    rep = json.loads((tmp_path / "covering_report.json").read_text())
    assert rep["reports"][0]["verdict"] == "FAIL"
    assert rep["reports"][0]["stats"]["margin"] < 0


def test_budget_starved_attractor_exit_two(tmp_path):
    cfg = _write_cfg(tmp_path, {"grid_n": 128,
                                "params": {"attractor": {"max_iters": 2}}})
    rc = main(["attractor", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 2
    rep = json.loads((tmp_path / "attractor_report.json").read_text())
    assert rep["reports"][0]["verdict"] == "INCONCLUSIVE"


# ---------------------------------------------------------------------------
# config validation


@pytest.mark.parametrize("payload,pointer", [
    ({"bogus": 1}, "/bogus"),
    ({"family": {"λ": 2.0}}, "/family/λ"),
    ({"params": {"warp": {}}}, "/params/warp"),
    ({"params": {"sync": {"frobnicate": 3}}}, "/params/sync/frobnicate"),
])
def test_config_errors_point_at_the_field(tmp_path, capsys, payload, pointer):
    cfg = _write_cfg(tmp_path, payload)
    rc = main(["sync", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert f"config error at {pointer}:" in err


def test_flag_not_applicable_is_config_error(tmp_path, capsys):
    rc = main(["sync", "--depth", "50", "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "/params/sync/depth" in err
    assert "not applicable" in err


def test_experiment_config_roundtrip_hash():
    c = ExperimentConfig()
    assert ExperimentConfig.from_dict(c.to_dict()).hash() == c.hash()
    c2 = ExperimentConfig(grid_n=128)
    assert c2.hash() != c.hash()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"nope": True})


def test_config_flag_overrides_param_block(tmp_path):
    cfg = _write_cfg(tmp_path, {"params": {"sync": {"n": 5}}})
    rc = main(["sync", "--config", cfg, "--n", "12", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "sync_report.json").read_text())
    assert rep["reports"][0]["stats"]["n_triples"] == 12


# ---------------------------------------------------------------------------
# artifacts


def test_artifact_provenance_first_line(tmp_path):
    rc = main(["cusp", "--out", str(tmp_path)])
    assert rc == 0
    first = (tmp_path / "cusp_diameters.csv").read_text().splitlines()[0]
    assert first == (f"# config={ExperimentConfig().hash()} seed=0 "
                     f"version={__version__}")


def test_chaos_artifacts_bit_identical_across_runs(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    assert main(["chaos", "--n", "2000", "--out", str(d1)]) == 0
    assert main(["chaos", "--n", "2000", "--out", str(d2)]) == 0
    for name in ("chaos_points.csv", "chaos_density.pgm",
                 "chaos_report.json"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name


def test_attractor_matches_golden_grid(tmp_path):
    cfg = _write_cfg(tmp_path, {"grid_n": 128})
    rc = main(["attractor", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 0
    got = GridSet.from_pgm((tmp_path / "attractor.pgm").read_bytes())
    want = GridSet.from_pgm(
        open(os.path.join(FIXTURES, "attractor_128.pgm"), "rb").read())
    assert (got.x0, got.y0, got.h) == (want.x0, want.y0, want.h)
    assert np.array_equal(got.mask, want.mask)


def test_graph_samples_artifact(tmp_path):
    rc = main(["graph", "--n", "16", "--depth", "512", "--out",
               str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "graph_samples.csv").read_text().splitlines()
    assert lines[0].startswith("# config=")
    assert lines[1] == "t0,digits_digest,gamma_x1,gamma_x2,depth,tail"
    assert len(lines) == 18
    rep = json.loads((tmp_path / "graph_report.json").read_text())
    assert rep["reports"][0]["stats"]["converged_fraction"] == 1.0


def test_lyapunov_per_start_artifact(tmp_path):
    cfg = _write_cfg(tmp_path, {"params": {"lyapunov": {"starts": 6,
                                                        "n": 2000}}})
    rc = main(["lyapunov", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "lyapunov_starts.csv").read_text().splitlines()
    assert lines[1] == "start,lambda_hat"
    assert len(lines) == 8  # provenance + header + six starts


def test_birkhoff_table_artifact(tmp_path):
    cfg = _write_cfg(tmp_path, {"params": {"birkhoff": {"starts": 6,
                                                        "n": 5000}}})
    rc = main(["birkhoff", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "birkhoff_averages.csv").read_text().splitlines()
    assert lines[1] == "observable,start,average,se"
    assert len(lines) == 2 + 3 * 6


def test_bony_histogram_artifact(tmp_path):
    rc = main(["bony", "--n", "12", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "bony_histogram.csv").read_text().splitlines()
    assert lines[1] == "diam_bin,count"


def test_mixing_curve_artifact(tmp_path):
    cfg = _write_cfg(tmp_path, {"params": {"mixing": {"n": 50_000,
                                                      "lags": 10}}})
    rc = main(["mixing", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "mixing_curve.csv").read_text().splitlines()
    assert lines[1] == "lag,C"
    assert len(lines) == 2 + 11


# ---------------------------------------------------------------------------
# render


def test_render_point_measure_lights_one_cell(tmp_path):
    cfg = _write_cfg(tmp_path, {"grid_n": 64})
    src = tmp_path / "delta.csv"
    src.write_text("x1,x2,w\n0,0,1\n")
    rc = main(["render", str(src), "--config", cfg, "--out", str(tmp_path)])
    assert rc == 0
    data = (tmp_path / "delta_render.pgm").read_bytes()
    lines = data.split(b"\n")
    i = 1
    while lines[i].startswith(b"#"):
        i += 1
    w, h = map(int, lines[i].split())
    img = np.frombuffer(b"\n".join(lines[i + 2:])[:w * h],
                        dtype=np.uint8).reshape(h, w)
    ys, xs = np.nonzero(img)
    assert len(ys) == 1
    assert img[ys[0], xs[0]] == 255
    # center of a radius-3 domain on a 64-grid, rows flipped for display
    assert (ys[0], xs[0]) == (31, 32)


def test_render_gridset_passthrough(tmp_path):
    fix = os.path.join(FIXTURES, "attractor_128.pgm")
    rc = main(["render", fix, "--out", str(tmp_path)])
    assert rc == 0
    got = GridSet.from_pgm(
        (tmp_path / "attractor_128_render.pgm").read_bytes())
    want = GridSet.from_pgm(open(fix, "rb").read())
    assert np.array_equal(got.mask, want.mask)


# ---------------------------------------------------------------------------
# subcommand batteries


def test_family_check_reports(tmp_path):
    rc = main(["family-check", "--n", "2000", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "family_check_report.json").read_text())
    assert [r["name"] for r in rep["reports"]] == [
        "jacobian_consistency", "definition_eigen", "contraction_report",
        "avg_contraction_check"]


def test_covering_search_reports_best_candidate(tmp_path):
    cfg = _write_cfg(tmp_path, {"params": {"covering": {
        "n_candidates": 4, "grid_n": 96}}})
    rc = main(["covering", "--config", cfg, "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "covering_report.json").read_text())
    stats = rep["reports"][0]["stats"]
    assert {"center", "radius", "margin"} <= set(stats)
    # verdict must agree with the sign of the recorded margin
    assert (rc == 0) == (stats["margin"] >= 0.0)


def test_usc_scan_small(tmp_path):
    rc = main(["usc", "--n", "2", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "usc_report.json").read_text())
    stats = rep["reports"][0]["stats"]
    assert stats["failures"] == 0
    assert len(stats["deltas"]) == 2
    assert all(d > 0 for d in stats["deltas"])


def test_perturb_check_reports(tmp_path):
    rc = main(["perturb", "check", "--eps", "0.001", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "perturb_report.json").read_text())
    assert [r["name"] for r in rep["reports"]] == [
        "perturb_validity", "c1_distance", "dominated_splitting_check",
        "dominated_splitting_check"]


def test_perturb_rejects_oversized_field(tmp_path):
    rc = main(["perturb", "check", "--eps", "10", "--out", str(tmp_path)])
    assert rc == 1
    rep = json.loads((tmp_path / "perturb_report.json").read_text())
    assert rep["reports"][0]["verdict"] == "FAIL"
    assert "radius" in rep["reports"][0]["notes"]


# ---------------------------------------------------------------------------
# environment plumbing


def test_threads_env_caps_blas_pools(tmp_path, monkeypatch):
    saved = {v: os.environ.get(v) for v in
             ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
              "NUMEXPR_NUM_THREADS")}
    monkeypatch.setenv("ERGOGRAPH_THREADS", "3")
    try:
        rc = main(["sync", "--n", "8", "--out", str(tmp_path)])
        assert rc == 0
        assert os.environ["OMP_NUM_THREADS"] == "3"
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v


def test_module_entrypoint_subprocess(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "ergograph.cli", "sync", "--n", "8",
         "--out", str(tmp_path)],
        capture_output=True, text=True, timeout=120)
    assert out.returncode == 0
    assert "sync_test: PASS" in out.stdout
    assert (tmp_path / "sync_report.json").exists()
