import csv
import io
from decimal import Decimal
from pathlib import Path

import pytest

from rtlat.cli import main
from rtlat.netsim import ATTENUATION_PRESET
from rtlat.scenario import (
    FRAME_COLUMNS,
    ConfigError,
    MalformedCsv,
    Scenario,
    load_scenario,
    measurement_windows,
    report_diff,
    run,
    scenario_from_dict,
    set_mode,
    tomllib,
    validate,
)

ROOT = Path(__file__).resolve().parents[1]
SMALL = """
name = "small"
mode = "adaptive"
duration_per_step_s = 4
warmup_s = 1
[schedule]
steps = [12, 6, 3]
[link]
queue_capacity_bytes = 1_350_000
"""


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    scn = scenario_from_dict(tomllib.loads(SMALL))
    return scn, run(scn, out), out


def test_shipped_scenarios_validate():
    for path in sorted((ROOT / "scenarios").glob("*.toml")):
        assert validate(path.read_text()) == [], path.name


def test_default_file_matches_builtin_defaults():
    from_file = load_scenario(ROOT / "scenarios" / "default.toml")
    assert from_file == scenario_from_dict({"name": "default"})


def test_diagnostics_name_key_and_line():
    text = 'streams = 3\n\n[link]\nloss_prob = 1.5\nwhat = 1\n'
    diags = validate(text)
    assert diags == [
        "streams (line 1): must be <= 2, got 3",
        "link.loss_prob (line 4): must be <= 1, got 1.5",
        "link.what (line 5): unknown key",
    ]


def test_cross_field_checks():
    diags = validate({"profiles": {"high": {"bitrate_bps": 1_000_000}}})
    assert any("strictly decrease" in d for d in diags)
    assert any("warmup" in d for d in validate({"warmup_s": 30}))
    assert any("mirror_schedule" in d for d in validate({"feedback_link": {"mirror_schedule": False}}))


def test_parse_error_reported():
    assert validate("streams = [")[0].startswith("parse error")


def test_config_error_carries_diagnostics():
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict({"mode": "turbo"})
    assert "mode" in exc.value.diagnostics[0]


def test_attenuation_steps_map_to_preset():
    scn = scenario_from_dict({"schedule": {"kind": "attenuation", "steps": list(ATTENUATION_PRESET)}})
    assert [bw for _, bw in scn.bandwidth_steps()] == list(ATTENUATION_PRESET.values())


def test_set_mode_switches_controller():
    scn = set_mode(Scenario(), "static")
    assert scn.mode == "static" and not scn.session.adaptive


def test_measurement_windows_skip_warmup():
    scn = scenario_from_dict({"duration_per_step_s": 10, "warmup_s": 2, "schedule": {"steps": [1, 2]}})
    assert measurement_windows(scn) == [(2 * 10**9, 10 * 10**9), (12 * 10**9, 20 * 10**9)]


def _frames(out):
    with open(out / "frames.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def _summary(out):
    with open(out / "summary.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_frames_csv_columns(small):
    _, _, out = small
    with open(out / "frames.csv") as fh:
        assert fh.readline().strip().split(",") == FRAME_COLUMNS


def test_summary_means_recompute_from_frames(small):
    scn, _, out = small
    frames = _frames(out)
    for row in _summary(out):
        if row["label"] == "Freezing":
            assert row["mean_e2e_ms"] == ""
            continue
        step = int(row["step"])
        lo = Decimal(step * 4 + 1)
        hi = Decimal(step * 4 + 4)
        e2e = [
            Decimal(f["e2e_ms"]) for f in frames
            if f["stream_id"] == row["stream_id"] and lo <= Decimal(f["time_s"]) < hi
        ]
        assert len(e2e) == int(row["frames_displayed"])
        assert float(sum(e2e) / len(e2e)) == pytest.approx(float(row["mean_e2e_ms"]), abs=1e-6)


def test_decisions_follow_report_arrivals(small):
    _, result, out = small
    with open(out / "decisions.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for st in result.sim.streams:
        times = [Decimal(r["time_s"]) for r in rows if int(r["stream_id"]) == st.stream_id]
        assert times == [Decimal(t) / 10**9 for t in st.rr_arrivals]


def test_levels_change_by_one_step(small):
    _, _, out = small
    with open(out / "decisions.csv", newline="") as fh:
        order = {"Low": 0, "Medium": 1, "High": 2}
        for r in csv.DictReader(fh):
            assert abs(order[r["from_level"]] - order[r["to_level"]]) <= 1


def test_occupancy_sums_to_one(small):
    _, _, out = small
    for row in _summary(out):
        total = sum(float(row[k]) for k in ("occ_high", "occ_medium", "occ_low"))
        assert total == pytest.approx(1.0, abs=1e-5)


def test_report_diff_exact(small):
    _, _, out = small
    rep = report_diff(out / "frames.csv")
    assert rep.count > 0
    assert set(rep.differences_ms) == {Decimal("90")}


def test_report_diff_rejects_bad_csv():
    with pytest.raises(MalformedCsv):
        report_diff(io.StringIO("a,b\n1,2\n"))
    with pytest.raises(MalformedCsv):
        report_diff(io.StringIO("e2e_ms,s2s_ms\nx,1\n"))


def test_cli_validate_and_presets(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("streams = 0\n")
    assert main(["validate", str(bad)]) == 1
    assert "streams (line 1)" in capsys.readouterr().out
    assert main(["validate", str(ROOT / "scenarios" / "default.toml")]) == 0
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "connection lost" in out and "High-Medium" in out


def test_cli_run_honours_env_and_flags(tmp_path, monkeypatch, capsys):
    scn = tmp_path / "s.toml"
    scn.write_text('duration_per_step_s = 2\nwarmup_s = 1\n[schedule]\nsteps = [12]\n')
    monkeypatch.setenv("RTLAT_OUT", str(tmp_path / "env"))
    assert main(["run", "--scenario", str(scn), "--mode", "static", "--seed", "3"]) == 0
    assert (tmp_path / "env" / "summary.csv").exists()
    assert main(["run", "--scenario", str(scn), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "frames.csv").exists()
    assert main(["report-diff", str(tmp_path / "flag" / "frames.csv")]) == 0
    assert "mean_ms=90.000000" in capsys.readouterr().out


def test_cli_run_bad_scenario(tmp_path):
    scn = tmp_path / "s.toml"
    scn.write_text("mode = 'warp'\n")
    assert main(["run", "--scenario", str(scn), "--out", str(tmp_path)]) == 2
