"""Scenario configuration: flat key=value files driving full pipeline runs.

A scenario names a demand source (synthetic generator, raw records, or a
trips CSV), station-siting parameters, the fleet, and every dispatch knob.
All keys have defaults; unknown keys are rejected; validation reports every
problem at once on a single line so shell callers get one parseable reason.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from statistics import fmean
from typing import Sequence

from .dispatch import DispatchConfig, RideRequest
from .errors import ConfigError, DataError
from .geo import StationLayout, kmeans, project, read_layout_csv
from .ingest import (DemandCurve, SyntheticSpec, Trip, build_demand_curve, extract_trips,
                     generate_synthetic, read_records, read_trips_csv)
from .simkernel import FleetSpec, Simulation, SimReport

# key -> (default as written in a file, one-line description)
CONFIG_KEYS: dict[str, tuple[str, str]] = {
    "mode": ("synth", "demand source: synth | records | trips"),
    "records_path": ("", "raw status-record CSV (mode=records)"),
    "trips_path": ("", "extracted trips CSV (mode=trips)"),
    "horizon_start": ("2016-05-02T00:00:00", "simulation clock zero (ISO timestamp)"),
    "synth_taxis": ("80", "trajectory taxis in the synthetic generator"),
    "synth_hourly": ("120,120,120", "trips started per hour, comma list"),
    "synth_hotspots": ("6", "spatial demand hotspots"),
    "synth_sigma_km": ("2.0", "hotspot spread in km"),
    "extent": ("116.20,39.75,116.55,40.05", "lon_min,lat_min,lon_max,lat_max box"),
    "k": ("4", "number of charging stations (K-means clusters)"),
    "chargers_per_station": ("2", "chargers installed per station"),
    "layout_path": ("", "precomputed station layout CSV; empty = run K-means"),
    "fleet_size": ("50", "electric taxis in the dispatched fleet"),
    "battery_kwh": ("38.0", "battery capacity per taxi"),
    "range_km": ("250.0", "full-charge driving range; sets consumption"),
    "speed_kmh": ("30.0", "constant travel speed"),
    "charge_power_kw": ("60.0", "charger power"),
    "x": ("0.01", "demand-weight scale in the score"),
    "w1": ("-1.0", "score weight: pickup distance"),
    "w2": ("-0.5", "score weight: cumulative income"),
    "w3": ("1.0", "score weight: station matching degree"),
    "w4": ("0.0", "score weight: empty time"),
    "soc_charge_threshold": ("0.2", "SOC below which a taxi goes to charge"),
    "wait_escalation_min": ("5.0", "minutes before adjacent regions searched"),
    "wait_cancel_min": ("30.0", "minutes before a waiting request cancels"),
    "reachability_buffer": ("0.1", "energy safety margin fraction"),
    "adjacency_m": ("3", "adjacent sub-regions searched on escalation"),
    "flag_fall": ("13.0", "fare base"),
    "per_km_rate": ("2.3", "fare per km"),
    "seed": ("12345", "seed for generator and K-means"),
    "invariant_checks": ("true", "run per-event state assertions"),
}

_MODES = ("synth", "records", "trips")
_TRUE = ("true", "1", "yes", "on")
_FALSE = ("false", "0", "no", "off")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse key=value lines; '#' comments and blank lines are skipped."""
    raw: dict[str, str] = {}
    errors: list[str] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"{source} line {line_no}: expected key=value")
            continue
        key, value = stripped.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            errors.append(f"{source} line {line_no}: empty key")
        elif key in raw:
            errors.append(f"{source} line {line_no}: duplicate key {key}")
        else:
            raw[key] = value
    if errors:
        raise ConfigError("; ".join(errors))
    return raw


def load_config(path: str | Path | None,
                overrides: Sequence[str] = ()) -> dict[str, str]:
    """Read a scenario file, apply key=value overrides, fill defaults."""
    raw: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read scenario file {path}: {e}") from e
        raw = parse_config_text(text, source=str(path))
    errors: list[str] = []
    for item in overrides:
        if "=" not in item:
            errors.append(f"override {item!r} is not key=value")
            continue
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        errors.append(f"unknown keys: {', '.join(unknown)}")
    if errors:
        raise ConfigError("; ".join(errors))
    resolved = {key: default for key, (default, _) in CONFIG_KEYS.items()}
    resolved.update(raw)
    return resolved


@dataclass
class Scenario:
    """Typed, validated scenario ready to build and run."""

    mode: str
    records_path: str
    trips_path: str
    horizon_start: datetime
    synth: SyntheticSpec | None
    k: int
    chargers_per_station: int
    layout_path: str
    fleet: FleetSpec
    dispatch: DispatchConfig
    seed: int
    invariant_checks: bool
    resolved: dict[str, str]


def _collect(errors: list[str], key: str, value: str, kind: str):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(value)
        if kind == "datetime":
            return datetime.fromisoformat(value)
        raise AssertionError(kind)
    except ValueError:
        errors.append(f"{key}: cannot parse {value!r} as {kind}")
        return None


def validate_config(resolved: dict[str, str]) -> Scenario:
    """Type and cross-check every key, reporting all failures at once."""
    errors: list[str] = []
    get = resolved.__getitem__

    mode = get("mode").lower()
    if mode not in _MODES:
        errors.append(f"mode: must be one of {', '.join(_MODES)}, got {get('mode')!r}")
    if mode == "records" and not get("records_path"):
        errors.append("records_path: required when mode=records")
    if mode == "trips" and not get("trips_path"):
        errors.append("trips_path: required when mode=trips")

    horizon = _collect(errors, "horizon_start", get("horizon_start"), "datetime")
    k = _collect(errors, "k", get("k"), "int")
    chargers = _collect(errors, "chargers_per_station", get("chargers_per_station"), "int")
    fleet_size = _collect(errors, "fleet_size", get("fleet_size"), "int")
    battery = _collect(errors, "battery_kwh", get("battery_kwh"), "float")
    range_km = _collect(errors, "range_km", get("range_km"), "float")
    speed = _collect(errors, "speed_kmh", get("speed_kmh"), "float")
    power = _collect(errors, "charge_power_kw", get("charge_power_kw"), "float")
    seed = _collect(errors, "seed", get("seed"), "int")
    inv = _collect(errors, "invariant_checks", get("invariant_checks"), "bool")

    if k is not None and k < 1:
        errors.append(f"k: must be >= 1, got {k}")
    if chargers is not None and chargers < 1:
        errors.append(f"chargers_per_station: must be >= 1, got {chargers}")
    if range_km is not None and range_km <= 0:
        errors.append(f"range_km: must be positive, got {range_km}")

    dispatch_values = {}
    for key, kind in (("x", "float"), ("w1", "float"), ("w2", "float"), ("w3", "float"),
                      ("w4", "float"), ("soc_charge_threshold", "float"),
                      ("wait_escalation_min", "float"), ("wait_cancel_min", "float"),
                      ("reachability_buffer", "float"), ("adjacency_m", "int"),
                      ("flag_fall", "float"), ("per_km_rate", "float")):
        dispatch_values[key] = _collect(errors, key, get(key), kind)

    synth = None
    if mode == "synth":
        synth_taxis = _collect(errors, "synth_taxis", get("synth_taxis"), "int")
        hotspots = _collect(errors, "synth_hotspots", get("synth_hotspots"), "int")
        sigma = _collect(errors, "synth_sigma_km", get("synth_sigma_km"), "float")
        hourly: list[int] | None = []
        for part in get("synth_hourly").split(","):
            n = _collect(errors, "synth_hourly", part.strip(), "int")
            if n is None:
                hourly = None
                break
            hourly.append(n)
        extent_parts = get("extent").split(",")
        extent = None
        if len(extent_parts) != 4:
            errors.append(f"extent: expected 4 comma-separated numbers, got {get('extent')!r}")
        else:
            parsed = [_collect(errors, "extent", p.strip(), "float") for p in extent_parts]
            if None not in parsed:
                extent = tuple(parsed)
        if not errors and None not in (synth_taxis, hotspots, sigma, horizon, speed) \
                and hourly is not None and extent is not None:
            try:
                synth = SyntheticSpec(n_taxis=synth_taxis, horizon_start=horizon,
                                      hourly_trips=hourly, extent=extent,
                                      n_hotspots=hotspots, hotspot_sigma_km=sigma,
                                      speed_kmh=speed)
                synth.validate()
            except ConfigError as e:
                errors.append(str(e))

    fleet = None
    if not errors:
        try:
            fleet = FleetSpec(n_taxis=fleet_size, battery_capacity=battery,
                              consumption=battery / range_km, speed_kmh=speed,
                              charge_power_kw=power)
        except ConfigError as e:
            errors.append(str(e))

    dispatch = None
    if not errors:
        try:
            dispatch = DispatchConfig(**dispatch_values)
        except ConfigError as e:
            errors.append(str(e))

    if errors:
        raise ConfigError("; ".join(errors))
    return Scenario(mode=mode, records_path=get("records_path"),
                    trips_path=get("trips_path"), horizon_start=horizon, synth=synth,
                    k=k, chargers_per_station=chargers, layout_path=get("layout_path"),
                    fleet=fleet, dispatch=dispatch, seed=seed, invariant_checks=inv,
                    resolved=dict(resolved))


def load_scenario(path: str | Path | None, overrides: Sequence[str] = ()) -> Scenario:
    return validate_config(load_config(path, overrides))


@dataclass
class BuiltScenario:
    scenario: Scenario
    trips: list[Trip]
    requests: list[RideRequest]
    layout: StationLayout
    demand: DemandCurve
    ref_lon: float
    ref_lat: float


def build_scenario(sc: Scenario) -> BuiltScenario:
    """Materialize trips, requests, demand curve, and the station layout.

    The projection reference is the mean trip origin, so all planar
    coordinates (and any precomputed layout CSV) live in the frame of the
    dataset being simulated.
    """
    if sc.mode == "synth":
        trips = extract_trips(generate_synthetic(sc.synth, sc.seed)).trips
    elif sc.mode == "records":
        trips = extract_trips(read_records(sc.records_path)).trips
    else:
        trips = read_trips_csv(sc.trips_path)
    if not trips:
        raise DataError(f"{sc.mode} source produced no valid trips")

    ref_lon = fmean(t.o_lon for t in trips)
    ref_lat = fmean(t.o_lat for t in trips)
    trips = sorted(trips, key=lambda t: (t.start_time, t.taxi_id))

    requests = []
    for i, t in enumerate(trips):
        offset_h = (t.start_time - sc.horizon_start).total_seconds() / 3600.0
        if offset_h < 0:
            raise ConfigError(
                f"horizon_start {sc.horizon_start.isoformat()} is later than "
                f"trip start {t.start_time.isoformat()}")
        requests.append(RideRequest(
            request_id=i,
            origin=project(t.o_lon, t.o_lat, ref_lon, ref_lat),
            destination=project(t.d_lon, t.d_lat, ref_lon, ref_lat),
            request_time=offset_h))

    if sc.layout_path:
        layout = read_layout_csv(sc.layout_path)
    else:
        layout = kmeans([r.origin for r in requests], sc.k, seed=sc.seed,
                        chargers_per_station=sc.chargers_per_station)
    demand = build_demand_curve(trips, sc.horizon_start)
    return BuiltScenario(scenario=sc, trips=trips, requests=requests, layout=layout,
                         demand=demand, ref_lon=ref_lon, ref_lat=ref_lat)


def run_scenario(built: BuiltScenario) -> tuple[SimReport, Simulation]:
    sim = Simulation(built.requests, built.layout, built.scenario.fleet,
                     built.scenario.dispatch, demand_curve=built.demand,
                     invariant_checks=built.scenario.invariant_checks)
    return sim.run(), sim


def run_sweep(resolved: dict[str, str], x_values: Sequence[float]) -> list[tuple[float, SimReport]]:
    """Re-run the same scenario for each x; rows in input order.

    Each run rebuilds from scratch, so rows are independent of execution
    order.
    """
    if not x_values:
        raise ConfigError("sweep needs at least one x value")
    rows = []
    for x in x_values:
        cfg = dict(resolved)
        cfg["x"] = repr(float(x))
        built = build_scenario(validate_config(cfg))
        report, _ = run_scenario(built)
        rows.append((float(x), report))
    return rows
