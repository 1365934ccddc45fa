"""Scenario parsing, design gates, and the command-line front end."""

import json
from pathlib import Path

import numpy as np
import pytest

from jafs.cli import main
from jafs.scenario import (
    ConfigError,
    DesignGateError,
    check_gates,
    load_scenario,
    run_certify,
    run_scenario,
    run_sweep,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SMOKE = SCENARIOS / "smoke.scenario"
FLAGSHIP = SCENARIOS / "mra36_q71.scenario"

MINIMAL = """\
[geometry]
n_underlying = 8
spacing = 0.5
marks = 0 1 2 3 7

[coset]
n_t = 8
m_t = 5
rows = 0 1 2 3 7

[grid]
q = 15
mode = inverse-sin

[source.1]
doa_deg = 0
band_lo_pi = -0.1
band_hi_pi = 0.2
variance = 5

[noise]
variance = 5
mode = estimate

[run]
n_blocks = 50
seed = 0
output_dir = out
"""


def write_scenario(tmp_path, text, name="case.scenario"):
    path = tmp_path / name
    path.write_text(text)
    return path


# -------------------------------------------------------------- parsing


def test_load_bundled_smoke():
    cfg = load_scenario(SMOKE)
    assert cfg.n_underlying == 8
    assert cfg.marks == (0, 1, 2, 3, 7)
    assert cfg.n_t == 8 and cfg.m_t == 5
    assert cfg.coset_rows == (0, 1, 2, 3, 7)
    assert cfg.grid_q == 15 and cfg.grid_angles is None
    assert len(cfg.sources) == 3
    assert cfg.sources[1].true_doa == 0.0
    assert cfg.sources[0].band[0] == pytest.approx(-0.8 * np.pi)
    assert cfg.noise_variance == 5.0 and cfg.noise_mode == "estimate"
    assert cfg.n_blocks == 500 and cfg.master_seed == 0


def test_load_bundled_flagship():
    cfg = load_scenario(FLAGSHIP)
    assert cfg.n_underlying == 36
    assert cfg.marks == (0, 1, 4, 10, 16, 22, 28, 30, 33, 35)
    assert cfg.n_t == 84 and cfg.m_t == 34
    assert cfg.coset_seed == 0
    assert cfg.grid_q == 71
    assert len(cfg.sources) == 12
    assert [round(np.degrees(s.true_doa)) for s in cfg.sources] == [
        -54, -45, -36, -27, -18, -9, 0, 9, 18, 27, 36, 45
    ]


def test_missing_section_rejected(tmp_path):
    path = write_scenario(tmp_path, MINIMAL.replace("[noise]", "[nois]"))
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_bad_band_rejected(tmp_path):
    bad = MINIMAL.replace("band_hi_pi = 0.2", "band_hi_pi = -0.3")
    with pytest.raises(ConfigError):
        load_scenario(write_scenario(tmp_path, bad))


def test_bad_threshold_rejected(tmp_path):
    bad = MINIMAL + "peak_threshold = 1.5\n"
    with pytest.raises(ConfigError):
        load_scenario(write_scenario(tmp_path, bad))


def test_row_count_mismatch_rejected(tmp_path):
    bad = MINIMAL.replace("m_t = 5", "m_t = 6")
    path = write_scenario(tmp_path, bad)
    cfg = load_scenario(path)  # parse is fine; mismatch surfaces at build
    with pytest.raises(ConfigError):
        run_certify(cfg)


def test_explicit_grid_angles(tmp_path):
    text = MINIMAL.replace(
        "q = 15\nmode = inverse-sin",
        "q = 3\nmode = explicit\nangles_deg = -30 0 30",
    )
    cfg = load_scenario(write_scenario(tmp_path, text))
    assert cfg.grid_q == 3
    np.testing.assert_allclose(np.degrees(cfg.grid_angles), [-30, 0, 30])


def test_unknown_grid_mode_rejected(tmp_path):
    text = MINIMAL.replace("mode = inverse-sin", "mode = uniform")
    with pytest.raises(ConfigError):
        load_scenario(write_scenario(tmp_path, text))


def test_nonexistent_path_rejected():
    with pytest.raises(ConfigError):
        load_scenario("/no/such/file.scenario")


# ---------------------------------------------------------------- gates


def test_hard_gate_blocks_undersampled_rows(tmp_path):
    bad = MINIMAL.replace("m_t = 5", "m_t = 3").replace("rows = 0 1 2 3 7\n", "")
    cfg = load_scenario(write_scenario(tmp_path, bad))
    with pytest.raises(DesignGateError):
        check_gates(cfg)


def test_warning_gate_records_without_raising(tmp_path):
    text = MINIMAL.replace("marks = 0 1 2 3 7", "marks = 0 1 2 3")
    cfg = load_scenario(write_scenario(tmp_path, text))
    gates = check_gates(cfg)  # M_s^2 = 16 > 15 passes; shrink further
    text2 = text.replace("marks = 0 1 2 3", "marks = 0 1 3")
    cfg2 = load_scenario(write_scenario(tmp_path, text2, "b.scenario"))
    gates2 = check_gates(cfg2)
    warn = next(g for g in gates2 if g["level"] == "warning")
    assert not warn["passed"]  # M_s^2 = 9 < Q = 15, still not fatal here


def test_certify_report_structure():
    report = run_certify(load_scenario(SMOKE))
    certs = report["certificates"]
    assert certs["rct_full_column_rank"]
    assert certs["virtual_ula"]["passed"]
    assert certs["sine_grid_residues"]["passed"]
    assert certs["kr_rank"]["rank"] == 15
    assert certs["coset"]["rows_cover_all_lags"]
    assert certs["geometry"]["spatial_compression_rate"] == pytest.approx(5 / 8)
    assert certs["coset"]["temporal_compression_rate"] == pytest.approx(5 / 8)


# ----------------------------------------------------------------- runs


def test_run_scenario_writes_artifacts(tmp_path):
    cfg = load_scenario(SMOKE)
    out = tmp_path / "run1"
    report = run_scenario(cfg, output_dir=str(out))
    for name in (
        "spectrum_raw.csv",
        "spectrum_plot.csv",
        "angular_marginal.csv",
        "report.json",
    ):
        assert (out / name).is_file()
    assert len(report["detections"]) == 3
    assert report["sigma_n_hat"] == pytest.approx(5.0, rel=0.2)
    on_disk = json.loads((out / "report.json").read_text())
    assert on_disk["sigma_n_hat"] == report["sigma_n_hat"]
    # spectrum_plot frequencies are sorted ascending
    header = (out / "spectrum_plot.csv").read_text().splitlines()[0].split(",")
    freqs = [float(tok) for tok in header[1:]]
    assert freqs == sorted(freqs)


def test_run_scenario_byte_identical_reruns(tmp_path):
    cfg = load_scenario(SMOKE)
    a, b = tmp_path / "a", tmp_path / "b"
    run_scenario(cfg, output_dir=str(a))
    run_scenario(cfg, output_dir=str(b))
    for name in ("spectrum_raw.csv", "spectrum_plot.csv", "angular_marginal.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_run_scenario_seed_override_changes_data(tmp_path):
    cfg = load_scenario(SMOKE)
    a, b = tmp_path / "a", tmp_path / "b"
    run_scenario(cfg, output_dir=str(a))
    run_scenario(cfg, output_dir=str(b), seed=123)
    assert (a / "spectrum_raw.csv").read_bytes() != (
        b / "spectrum_raw.csv"
    ).read_bytes()


def test_run_scenario_snapshot_dump(tmp_path):
    text = MINIMAL + "dump_snapshots = true\n"
    cfg = load_scenario(write_scenario(tmp_path, text))
    out = tmp_path / "dumped"
    run_scenario(cfg, output_dir=str(out))
    from jafs.simulate import read_snapshots

    blocks = read_snapshots(out / "compressed_blocks.bin")
    assert blocks.shape == (50, 5, 5)


# ---------------------------------------------------------------- sweep


def test_sweep_rows_and_determinism(tmp_path):
    cfg = load_scenario(SMOKE)
    path = run_sweep(
        cfg, "n_blocks", [100], [0, 1, 2], output_dir=str(tmp_path / "s1")
    )
    lines = path.read_text().splitlines()
    assert lines[0] == "param,value,seed,rs_rel_error,sigma_rel_error,detection_rate"
    assert len(lines) == 4
    again = run_sweep(
        cfg, "n_blocks", [100], [0, 1, 2], output_dir=str(tmp_path / "s2")
    )
    assert path.read_bytes() == again.read_bytes()


def test_sweep_empty_values_header_only(tmp_path):
    cfg = load_scenario(SMOKE)
    path = run_sweep(cfg, "n_blocks", [], [0], output_dir=str(tmp_path))
    assert path.read_text().splitlines() == [
        "param,value,seed,rs_rel_error,sigma_rel_error,detection_rate"
    ]


def test_sweep_rejects_unknown_param(tmp_path):
    cfg = load_scenario(SMOKE)
    with pytest.raises(ConfigError):
        run_sweep(cfg, "q", [3], [0], output_dir=str(tmp_path))


# ------------------------------------------------------------ CLI shell


def test_cli_certify_smoke_exits_zero(capsys):
    assert main(["certify", str(SMOKE)]) == 0
    out = capsys.readouterr().out
    assert "pass" in out


def test_cli_run_smoke(tmp_path, capsys):
    code = main(["run", str(SMOKE), "--output-dir", str(tmp_path / "o")])
    assert code == 0
    out = capsys.readouterr().out
    assert "detections: 3" in out


def test_cli_missing_config_exits_2(capsys):
    assert main(["run", "/no/such/file"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_gate_failure_exits_3(tmp_path, capsys):
    bad = MINIMAL.replace("m_t = 5", "m_t = 3").replace("rows = 0 1 2 3 7\n", "")
    path = write_scenario(tmp_path, bad)
    assert main(["run", str(path), "--output-dir", str(tmp_path / "o")]) == 3
    assert "design gate" in capsys.readouterr().err


def test_cli_sweep(tmp_path, capsys):
    code = main(
        [
            "sweep",
            str(SMOKE),
            "--param",
            "n_blocks",
            "--values",
            "100,200",
            "--seeds",
            "0",
            "--output-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3
