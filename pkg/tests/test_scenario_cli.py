import json

import pytest

from etfleet.cli import main
from etfleet.errors import ConfigError, DataError
from etfleet.geo import write_layout_csv
from etfleet.scenario import (CONFIG_KEYS, build_scenario, load_config,
                              load_scenario, parse_config_text, run_scenario,
                              run_sweep, validate_config)

TINY = ["synth_taxis=30", "synth_hourly=24,24", "synth_hotspots=3",
        "synth_sigma_km=1.0", "k=2", "fleet_size=12", "seed=777"]


# -- config text parsing --------------------------------------------------------

def test_parse_config_skips_comments_and_blanks():
    raw = parse_config_text("# header\n\nmode = synth  # inline\nk=3\n")
    assert raw == {"mode": "synth", "k": "3"}


def test_parse_config_duplicate_key():
    with pytest.raises(ConfigError, match="line 2.*duplicate key k"):
        parse_config_text("k=1\nk=2\n")


def test_parse_config_missing_equals():
    with pytest.raises(ConfigError, match="line 1.*key=value"):
        parse_config_text("just words\n")


def test_parse_config_reports_every_bad_line():
    with pytest.raises(ConfigError, match="line 1.*; .*line 3"):
        parse_config_text("bad\nk=1\n=empty\n")


# -- load_config -------------------------------------------------------------------

def test_load_config_defaults_when_no_file():
    resolved = load_config(None)
    assert set(resolved) == set(CONFIG_KEYS)
    assert resolved["mode"] == "synth"
    assert resolved["fleet_size"] == "50"


def test_load_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown keys: fleet_sise"):
        load_config(None, ["fleet_sise=20"])


def test_load_config_override_beats_file(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("fleet_size=9\nseed=1\n")
    resolved = load_config(cfg, ["fleet_size=33"])
    assert resolved["fleet_size"] == "33"
    assert resolved["seed"] == "1"


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read scenario file"):
        load_config("/nonexistent/path.cfg")


def test_load_config_bad_override_shape():
    with pytest.raises(ConfigError, match="not key=value"):
        load_config(None, ["x:0.1"])


# -- validate_config ------------------------------------------------------------------

def test_validate_defaults_build_a_scenario():
    sc = validate_config(load_config(None))
    assert sc.mode == "synth"
    assert sc.fleet.n_taxis == 50
    assert sc.fleet.consumption == pytest.approx(38.0 / 250.0)
    assert sc.synth is not None and sc.synth.n_taxis == 80
    assert sc.invariant_checks is True


def test_validate_reports_all_failures_at_once():
    resolved = load_config(None, ["k=abc", "speed_kmh=fast", "seed=1.5"])
    with pytest.raises(ConfigError) as err:
        validate_config(resolved)
    msg = str(err.value)
    assert "k: cannot parse" in msg
    assert "speed_kmh: cannot parse" in msg
    assert "seed: cannot parse" in msg


def test_validate_fleet_size_zero():
    with pytest.raises(ConfigError, match="at least one taxi"):
        validate_config(load_config(None, ["fleet_size=0"]))


def test_validate_mode_records_needs_path():
    with pytest.raises(ConfigError, match="records_path: required"):
        validate_config(load_config(None, ["mode=records"]))


def test_validate_unknown_mode():
    with pytest.raises(ConfigError, match="mode: must be one of"):
        validate_config(load_config(None, ["mode=teleport"]))


def test_validate_bad_bool():
    with pytest.raises(ConfigError, match="invariant_checks"):
        validate_config(load_config(None, ["invariant_checks=maybe"]))


def test_validate_bad_extent_count():
    with pytest.raises(ConfigError, match="extent: expected 4"):
        validate_config(load_config(None, ["extent=1,2,3"]))


# -- scenario building ------------------------------------------------------------------

def tiny_scenario(extra=()):
    return load_scenario(None, TINY + list(extra))


def test_build_scenario_produces_ordered_requests():
    built = build_scenario(tiny_scenario())
    assert built.requests, "expected demand"
    ids = [r.request_id for r in built.requests]
    assert ids == list(range(len(ids)))
    times = [r.request_time for r in built.requests]
    assert times == sorted(times)
    assert all(t >= 0 for t in times)
    assert len(built.layout) == 2
    assert built.demand.total == len(built.trips)


def test_build_scenario_rejects_late_horizon(tmp_path):
    # synthetic trips start at the horizon by construction; pre-existing
    # trips files can predate a misconfigured clock zero
    from etfleet.ingest import write_trips_csv
    built = build_scenario(tiny_scenario())
    path = tmp_path / "trips.csv"
    write_trips_csv(built.trips, path)
    sc = load_scenario(None, ["mode=trips", f"trips_path={path}",
                              "horizon_start=2016-05-02T01:00:00",
                              "k=2", "fleet_size=12"])
    with pytest.raises(ConfigError, match="horizon_start"):
        build_scenario(sc)


def test_layout_path_round_trip(tmp_path):
    built = build_scenario(tiny_scenario())
    path = tmp_path / "layout.csv"
    write_layout_csv(built.layout, path)
    rebuilt = build_scenario(tiny_scenario([f"layout_path={path}"]))
    assert [(s.station_id, s.centroid.x, s.centroid.y, s.chargers) for s in rebuilt.layout] \
        == [(s.station_id, s.centroid.x, s.centroid.y, s.chargers) for s in built.layout]


def test_run_scenario_smoke():
    report, sim = run_scenario(build_scenario(tiny_scenario()))
    assert 0.0 <= report.fulfill_rate <= 1.0
    assert report.n_requests == report.completed + report.cancelled
    assert json.loads(report.to_json())["n_taxis"] == 12
    assert sim.total_fleet_km == pytest.approx(report.total_fleet_km)


def test_run_sweep_rows_follow_input_order():
    resolved = load_config(None, TINY)
    rows = run_sweep(resolved, [0.1, 0.001])
    assert [x for x, _ in rows] == [0.1, 0.001]


def test_run_sweep_single_x_matches_direct_run():
    resolved = load_config(None, TINY)
    rows = run_sweep(resolved, [0.05])
    direct = dict(resolved, x="0.05")
    report, _ = run_scenario(build_scenario(validate_config(direct)))
    assert rows[0][1].to_json() == report.to_json()


def test_run_sweep_empty_x_rejected():
    with pytest.raises(ConfigError, match="at least one x"):
        run_sweep(load_config(None, TINY), [])


# -- CLI: generation pipeline ---------------------------------------------------------

def test_cli_synth_writes_records(tmp_path, capsys):
    code = main(["synth", "--out", str(tmp_path), "--taxis", "20",
                 "--hourly", "15,15", "--seed", "9"])
    assert code == 0
    assert (tmp_path / "records.csv").exists()
    assert "records=" in capsys.readouterr().out


def test_cli_pipeline_synth_ingest_stations(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--taxis", "25",
                 "--hourly", "20,20", "--seed", "4"]) == 0
    assert main(["ingest", "--records", str(tmp_path / "records.csv"),
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "trips=" in out and "transitions=" in out
    assert (tmp_path / "trips.csv").exists()
    assert (tmp_path / "demand.csv").exists()
    assert main(["stations", "--trips", str(tmp_path / "trips.csv"),
                 "--k", "3", "--out", str(tmp_path)]) == 0
    assert "stations=3" in capsys.readouterr().out
    layout_lines = (tmp_path / "layout.csv").read_text().strip().splitlines()
    assert len(layout_lines) == 4  # header + 3 stations
    assert layout_lines[0] == "station_id,x_km,y_km,chargers"


def test_cli_ingest_missing_records(tmp_path, capsys):
    code = main(["ingest", "--records", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path)])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_cli_ingest_malformed_records(tmp_path, capsys):
    bad = tmp_path / "records.csv"
    bad.write_text("1,20160502110000,116.3,39.9,1\nnot,a,row\n")
    assert main(["ingest", "--records", str(bad), "--out", str(tmp_path)]) == 2


def test_cli_synth_bad_start(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--start", "yesterday"]) == 1


def test_cli_synth_bad_hourly(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--hourly", "1,two"]) == 1


# -- CLI: simulate / sweep -----------------------------------------------------------

def set_args(extra=()):
    out = []
    for kv in TINY + list(extra):
        out += ["--set", kv]
    return out


def test_cli_simulate_writes_report_bundle(tmp_path, capsys):
    code = main(["simulate", *set_args(), "--out", str(tmp_path), "--no-figures"])
    assert code == 0
    out = capsys.readouterr().out
    assert "fulfill_rate=" in out and "total_fleet_km=" in out

    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["n_requests"] > 0
    assert payload["n_taxis"] == 12

    ts = (tmp_path / "timeseries.csv").read_text().splitlines()
    assert ts[0] == "hour,requests,fulfilled,cancelled,mean_wait"
    assert len(ts) == len(payload["hours"]) + 1

    chart = (tmp_path / "station_chart.csv").read_text().splitlines()
    assert chart[0] == "time,station_id,occupied,queue_len"
    assert not list(tmp_path.glob("*.png"))


def test_cli_simulate_renders_figures(tmp_path):
    assert main(["simulate", *set_args(), "--out", str(tmp_path)]) == 0
    for name in ("demand.png", "hourly.png", "layout.png", "lorenz.png"):
        assert (tmp_path / name).exists(), name


def test_cli_simulate_missing_scenario_file(tmp_path, capsys):
    assert main(["simulate", "--scenario", str(tmp_path / "no.cfg")]) == 1
    assert "cannot read scenario file" in capsys.readouterr().err


def test_cli_simulate_unknown_key(capsys):
    assert main(["simulate", "--set", "warp_速度=9"]) == 1
    assert "unknown keys" in capsys.readouterr().err


def test_cli_sweep_csv_schema(tmp_path, capsys):
    code = main(["sweep", *set_args(), "--x", "0.05,0.2",
                 "--out", str(tmp_path), "--no-figures"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.splitlines()[0] == "x,mean_wait_min,gini,fulfill_rate,mean_distance_km"
    lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "x,mean_wait_min,gini,fulfill_rate,mean_distance_km"
    assert len(lines) == 3
    assert [float(l.split(",")[0]) for l in lines[1:]] == [0.05, 0.2]


def test_cli_sweep_bad_x():
    assert main(["sweep", "--x", "0.1,xyz"]) == 1


# -- CLI: emissions / oracle -----------------------------------------------------------

def test_cli_emissions_stdout_schema(capsys):
    assert main(["emissions", "--km", "250"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "scope,tv_kg,ev_kg,reduction_pct"
    assert lines[1].startswith("per_100km,")
    assert lines[2].startswith("fleet_250.0km,")
    reduction = float(lines[1].rsplit(",", 1)[1])
    assert reduction == pytest.approx(52.145, abs=0.05)


def test_cli_emissions_from_report(tmp_path, capsys):
    (tmp_path / "report.json").write_text(json.dumps({"total_fleet_km": 400.0}))
    assert main(["emissions", "--report", str(tmp_path / "report.json")]) == 0
    fleet_line = capsys.readouterr().out.strip().splitlines()[2]
    assert fleet_line.startswith("fleet_400.0km,")
    tv_kg = float(fleet_line.split(",")[1])
    assert tv_kg == pytest.approx(4.0 * 18.5993, abs=0.01)


def test_cli_emissions_missing_report(tmp_path):
    assert main(["emissions", "--report", str(tmp_path / "no.json")]) == 2


def test_cli_emissions_invalid_report_json(tmp_path):
    bad = tmp_path / "report.json"
    bad.write_text("{not json")
    assert main(["emissions", "--report", str(bad)]) == 2


def test_cli_oracle_grid_runs_small(tmp_path, capsys):
    code = main(["oracle", "--arrivals", "300", "--out", str(tmp_path),
                 "--no-figures"])
    assert code == 0
    stdout_lines = capsys.readouterr().out.strip().splitlines()
    data_lines = [l for l in stdout_lines if l and not l.startswith(("s,", "wrote"))]
    assert len(data_lines) == 18
    csv_lines = (tmp_path / "oracle.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "s,lambda,mu,law,analytic,simulated,rel_err"
    assert len(csv_lines) == 19


# -- CLI: exit-code contract -------------------------------------------------------------

def test_cli_unknown_subcommand_is_config_error(capsys):
    assert main(["bogus"]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_no_arguments_is_config_error():
    assert main([]) == 1
