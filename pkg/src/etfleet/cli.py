"""Command-line front end.

Exit codes: 0 success, 1 config error, 2 data error, 3 runtime error.
Every failure prints a single line to stderr. File-writing subcommands
render their figures alongside the delimited outputs unless --no-figures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime
from pathlib import Path

from . import scenario as scn
from .emissions import ev_co2_per_100km, fleet_comparison, tv_co2_per_100km
from .errors import ConfigError, DataError
from .geo import kmeans, project, write_layout_csv
from .ingest import (SyntheticSpec, build_demand_curve, extract_trips, generate_synthetic,
                     read_records, read_trips_csv, write_demand_csv, write_records,
                     write_trips_csv)
from .queueing import QueueParams, des_oracle, w_mds, w_mgs, w_mms


class _Parser(argparse.ArgumentParser):
    # argparse exits with its own code 2 on usage errors; route through the
    # config-error path instead so the exit-code contract holds
    def error(self, message):
        raise ConfigError(message)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _note(path: Path) -> None:
    print(f"wrote {path}")


def cmd_synth(args) -> int:
    try:
        start = datetime.fromisoformat(args.start)
    except ValueError:
        raise ConfigError(f"--start must be an ISO timestamp, got {args.start!r}")
    try:
        hourly = [int(p) for p in args.hourly.split(",")]
    except ValueError:
        raise ConfigError(f"--hourly must be a comma list of integers, got {args.hourly!r}")
    spec = SyntheticSpec(
        n_taxis=args.taxis,
        horizon_start=start,
        hourly_trips=hourly,
        n_hotspots=args.hotspots,
    )
    records = generate_synthetic(spec, args.seed)
    out = _out_dir(args)
    path = out / "records.csv"
    write_records(records, path)
    print(f"records={len(records)} taxis={args.taxis} hours={len(spec.hourly_trips)}")
    _note(path)
    return 0


def cmd_ingest(args) -> int:
    records = read_records(args.records)
    result = extract_trips(records)
    if not result.trips:
        raise DataError(f"no valid trips extracted from {args.records} "
                        f"({result.excluded} excluded)")
    out = _out_dir(args)
    trips_path = out / "trips.csv"
    write_trips_csv(result.trips, trips_path)
    start = min(t.start_time for t in result.trips).replace(minute=0, second=0, microsecond=0)
    curve = build_demand_curve(result.trips, start)
    demand_path = out / "demand.csv"
    write_demand_csv(curve, demand_path)
    print(f"trips={len(result.trips)} excluded={result.excluded} "
          f"transitions={result.transitions} hours={len(curve.counts)}")
    _note(trips_path)
    _note(demand_path)
    if args.figures:
        from . import figures
        _note(figures.plot_demand(range(len(curve.counts)), curve.counts, out / "demand.png"))
    return 0


def cmd_stations(args) -> int:
    trips = read_trips_csv(args.trips)
    if not trips:
        raise DataError(f"no trips in {args.trips}")
    ref_lon = sum(t.o_lon for t in trips) / len(trips)
    ref_lat = sum(t.o_lat for t in trips) / len(trips)
    origins = [project(t.o_lon, t.o_lat, ref_lon, ref_lat) for t in trips]
    layout = kmeans(origins, args.k, seed=args.seed,
                    chargers_per_station=args.chargers)
    out = _out_dir(args)
    path = out / "layout.csv"
    write_layout_csv(layout, path)
    print(f"stations={len(layout)} ref_lon={ref_lon:.6f} ref_lat={ref_lat:.6f}")
    _note(path)
    if args.figures:
        from . import figures
        _note(figures.plot_layout(layout, origins, out / "layout.png"))
    return 0


def _write_report_files(out: Path, report, sim, built, figures_on: bool) -> None:
    report_path = out / "report.json"
    report_path.write_text(report.to_json() + "\n")
    _note(report_path)

    ts_path = out / "timeseries.csv"
    with open(ts_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["hour", "requests", "fulfilled", "cancelled", "mean_wait"])
        for h in report.hours:
            w.writerow([h.hour, h.requests, h.fulfilled, h.cancelled,
                        repr(h.mean_wait_min)])
    _note(ts_path)

    chart_path = out / "station_chart.csv"
    with open(chart_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time", "station_id", "occupied", "queue_len"])
        for t, sid, occ, qlen in report.station_chart:
            w.writerow([repr(t), sid, occ, qlen])
    _note(chart_path)

    if figures_on:
        from . import figures
        _note(figures.plot_demand([h.hour for h in report.hours],
                                  [h.requests for h in report.hours], out / "demand.png"))
        _note(figures.plot_hourly(report, out / "hourly.png"))
        if report.station_chart:
            _note(figures.plot_station_chart(report.station_chart, out / "stations.png"))
        _note(figures.plot_layout(built.layout, [r.origin for r in built.requests],
                                  out / "layout.png"))
        _note(figures.plot_lorenz([t.cumulative_income for t in sim.fleet],
                                  report.gini, out / "lorenz.png"))


def cmd_simulate(args) -> int:
    sc = scn.load_scenario(args.scenario, args.set or [])
    built = scn.build_scenario(sc)
    report, sim = scn.run_scenario(built)
    print(f"requests={report.n_requests} completed={report.completed} "
          f"cancelled={report.cancelled}")
    print(f"fulfill_rate={report.fulfill_rate:.4f} mean_wait_min={report.mean_wait_min:.3f} "
          f"gini={report.gini:.4f} mean_distance_km={report.mean_distance_km:.2f}")
    print(f"total_fleet_km={report.total_fleet_km:.1f} "
          f"emission_reduction_pct={report.emissions.reduction_fraction * 100:.2f}")
    if args.out:
        _write_report_files(_out_dir(args), report, sim, built, not args.no_figures)
    return 0


def cmd_sweep(args) -> int:
    try:
        x_values = [float(p) for p in args.x.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"--x must be a comma list of numbers, got {args.x!r}")
    resolved = scn.load_config(args.scenario, args.set or [])
    rows = scn.run_sweep(resolved, x_values)
    header = ["x", "mean_wait_min", "gini", "fulfill_rate", "mean_distance_km"]
    print(",".join(header))
    lines = []
    for x, report in rows:
        line = [repr(x), repr(report.mean_wait_min), repr(report.gini),
                repr(report.fulfill_rate), repr(report.mean_distance_km)]
        lines.append(line)
        print(",".join(line))
    if args.out:
        out = _out_dir(args)
        path = out / "sweep.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(lines)
        _note(path)
        if not args.no_figures:
            from . import figures
            _note(figures.plot_sweep(rows, out / "sweep.png"))
    return 0


def cmd_emissions(args) -> int:
    if args.report:
        try:
            payload = json.loads(Path(args.report).read_text())
        except OSError as e:
            raise DataError(f"cannot read report {args.report}: {e}") from e
        except json.JSONDecodeError as e:
            raise DataError(f"report {args.report} is not valid JSON: {e}") from e
        if "total_fleet_km" not in payload:
            raise DataError(f"report {args.report} has no total_fleet_km")
        km = float(payload["total_fleet_km"])
    else:
        km = args.km
    tv_rate = tv_co2_per_100km()
    ev_rate = ev_co2_per_100km()
    cmp_fleet = fleet_comparison(km, tv_rate, ev_rate)
    pct = repr(cmp_fleet.reduction_fraction * 100.0)
    print("scope,tv_kg,ev_kg,reduction_pct")
    print(f"per_100km,{tv_rate!r},{ev_rate!r},{pct}")
    print(f"fleet_{km!r}km,{cmp_fleet.tv_kg!r},{cmp_fleet.ev_kg!r},{pct}")
    return 0


ORACLE_GRID = [(law, s, rho)
               for law in ("exponential", "deterministic", "erlang:4")
               for s in (1, 2, 4)
               for rho in (0.5, 0.8)]


def cmd_oracle(args) -> int:
    mu = 1.0
    rows = []
    print("s,lambda,mu,law,analytic,simulated,rel_err")
    for i, (law, s, rho) in enumerate(ORACLE_GRID):
        lam = rho * s * mu
        if law == "exponential":
            analytic = w_mms(lam, mu, s)
        elif law == "deterministic":
            analytic = w_mds(lam, mu, s)
        else:
            # Erlang-4 service: sigma = mean/2, so the cv-form xi is 0.5
            analytic = w_mgs(QueueParams(lam=lam, mu=mu, sigma_t=0.5 / mu, s=s))
        simulated = des_oracle(lam, mu, law, s, args.arrivals, seed=args.seed + i)
        rel = abs(simulated - analytic) / analytic if analytic else 0.0
        rows.append({"s": s, "lam": lam, "mu": mu, "law": law, "rho": rho,
                     "analytic": analytic, "simulated": simulated, "rel_err": rel})
        print(f"{s},{lam!r},{mu!r},{law},{analytic!r},{simulated!r},{rel!r}")
    if args.out:
        out = _out_dir(args)
        path = out / "oracle.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["s", "lambda", "mu", "law", "analytic", "simulated", "rel_err"])
            for r in rows:
                w.writerow([r["s"], repr(r["lam"]), repr(r["mu"]), r["law"],
                            repr(r["analytic"]), repr(r["simulated"]), repr(r["rel_err"])])
        _note(path)
        if not args.no_figures:
            from . import figures
            _note(figures.plot_oracle(rows, out / "oracle.png"))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="etfleet",
                     description="Electric-taxi fleet dispatch simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic status-record file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--taxis", type=int, default=80)
    p.add_argument("--hourly", default="120,120,120",
                   help="trips per hour, comma list")
    p.add_argument("--hotspots", type=int, default=6)
    p.add_argument("--start", default="2016-05-02T00:00:00")
    p.add_argument("--seed", type=int, default=12345)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="extract trips and demand from records")
    p.add_argument("--records", required=True, help="status-record CSV path")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true", help="also render demand.png")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stations", help="site charging stations by K-means")
    p.add_argument("--trips", required=True, help="trips CSV path")
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--chargers", type=int, default=2)
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true", help="also render layout.png")
    p.set_defaults(func=cmd_stations)

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("--scenario", help="scenario config file; defaults apply if omitted")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a scenario key")
    p.add_argument("--out", help="directory for report, CSVs, and figures")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="re-run a scenario over several x values")
    p.add_argument("--scenario")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--x", default="0.001,0.01,0.1", help="comma list of x values")
    p.add_argument("--out")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("emissions", help="gasoline vs grid-charged fleet CO2")
    p.add_argument("--km", type=float, default=100.0, help="total fleet km")
    p.add_argument("--report", help="read total_fleet_km from a report.json")
    p.set_defaults(func=cmd_emissions)

    p = sub.add_parser("oracle", help="queueing formulas vs event simulation")
    p.add_argument("--arrivals", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=20160502)
    p.add_argument("--out")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - the contract is exit code 3
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
