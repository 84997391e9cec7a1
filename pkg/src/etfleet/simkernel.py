"""Deterministic event-driven fleet simulation.

The kernel binds dispatch, stations, and queue estimation into one heapq
event loop. Time is float hours from the horizon start. Events are ordered
by (time, sequence); the sequence counter makes ordering total, so identical
inputs produce an identical event log with no randomness anywhere in the
loop.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from statistics import fmean
from typing import Sequence

import numpy as np

from .dispatch import (Assignment, DispatchConfig, Dispatcher, ElectricTaxi, ETState,
                       RequestState, RideRequest, ScoreContext)
from .emissions import FleetComparison, fleet_comparison
from .errors import ConfigError
from .geo import StationLayout, assign_subregion, manhattan
from .ingest import DemandCurve
from .queueing import (StationStats, UnstableQueueError, estimate_params, utilization,
                       w_mgs)

TICK_HOURS = 1.0 / 60.0
C1_FLOOR = 1e-6


class EventKind(Enum):
    REQUEST_ARRIVAL = "request_arrival"
    PICKUP_COMPLETE = "trip_pickup_complete"
    DROPOFF_COMPLETE = "trip_dropoff_complete"
    CHARGE_START = "charge_start"
    CHARGE_COMPLETE = "charge_complete"
    WAITLIST_TICK = "waitlist_tick"


@dataclass(frozen=True)
class FleetSpec:
    n_taxis: int
    battery_capacity: float = 38.0    # kWh
    consumption: float = 0.152        # kWh per km (250 km on a full charge)
    speed_kmh: float = 30.0
    charge_power_kw: float = 60.0

    def __post_init__(self) -> None:
        if self.n_taxis < 1:
            raise ConfigError(f"fleet needs at least one taxi, got {self.n_taxis}")
        for name in ("battery_capacity", "consumption", "speed_kmh", "charge_power_kw"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class ChargingStation:
    station_id: int
    chargers: int
    occupied: int = 0
    queue: deque = field(default_factory=deque)  # taxi ids, FIFO
    stats: StationStats = None

    def __post_init__(self) -> None:
        if self.stats is None:
            self.stats = StationStats(self.station_id)


def travel_time(dist_km: float, speed_kmh: float) -> float:
    """Hours to cover dist_km at constant speed along the Manhattan path."""
    if speed_kmh <= 0:
        raise ConfigError(f"speed must be positive, got {speed_kmh}")
    if dist_km < 0:
        raise ValueError(f"distance must be >= 0, got {dist_km}")
    return dist_km / speed_kmh


def gini(values: Sequence[float]) -> float:
    """Mean absolute difference over twice the mean, via the sorted form."""
    vals = sorted(values)
    n = len(vals)
    if n == 0:
        raise ValueError("gini of an empty sequence")
    if any(v < 0 for v in vals):
        raise ValueError("gini requires nonnegative values")
    total = sum(vals)
    if total == 0:
        return 0.0
    weighted = sum((2 * (i + 1) - n - 1) * v for i, v in enumerate(vals))
    return weighted / (n * total)


@dataclass(frozen=True)
class HourRow:
    hour: int
    requests: int
    fulfilled: int
    cancelled: int
    mean_wait_min: float


@dataclass(frozen=True)
class SimReport:
    n_requests: int
    completed: int
    cancelled: int
    fulfill_rate: float
    mean_wait_min: float
    gini: float
    mean_distance_km: float
    total_fleet_km: float
    n_taxis: int
    n_stations: int
    hours: tuple
    station_chart: tuple  # (time, station_id, occupied, queue_len) rows
    emissions: FleetComparison

    def to_json(self) -> str:
        payload = {
            "n_requests": self.n_requests,
            "completed": self.completed,
            "cancelled": self.cancelled,
            "fulfill_rate": self.fulfill_rate,
            "mean_wait_min": self.mean_wait_min,
            "gini": self.gini,
            "mean_distance_km": self.mean_distance_km,
            "total_fleet_km": self.total_fleet_km,
            "n_taxis": self.n_taxis,
            "n_stations": self.n_stations,
            "hours": [vars(h) for h in self.hours],
            "station_chart": [list(row) for row in self.station_chart],
            "emissions": {
                "total_km": self.emissions.total_km,
                "tv_kg": self.emissions.tv_kg,
                "ev_kg": self.emissions.ev_kg,
                "reduction_fraction": self.emissions.reduction_fraction,
            },
        }
        return json.dumps(payload, sort_keys=True, indent=1)


def replay_totals(event_log: Sequence[dict]) -> dict:
    """Recompute headline totals from the event log alone.

    Independent cross-check of the kernel's running accumulators: total km,
    per-taxi income, completed/cancelled counts, and pickup waits are all
    derivable from logged events.
    """
    total_km = 0.0
    income: dict[int, float] = {}
    waits = []
    completed = cancelled = 0
    for entry in event_log:
        if "km" in entry:
            total_km += entry["km"]
        ev = entry["ev"]
        if ev == "pickup":
            waits.append(entry["wait_min"])
        elif ev == "dropoff":
            income[entry["taxi"]] = income.get(entry["taxi"], 0.0) + entry["fare"]
            completed += 1
        elif ev == "cancel":
            cancelled += 1
    return {"total_km": total_km, "income": income, "waits": waits,
            "completed": completed, "cancelled": cancelled}


class Simulation:
    """One scenario run. Build, call run() once, read the report."""

    def __init__(self, requests: Sequence[RideRequest], layout: StationLayout,
                 fleet_spec: FleetSpec, dispatch_cfg: DispatchConfig,
                 demand_curve: DemandCurve | None = None,
                 invariant_checks: bool = True):
        if len(layout) == 0:
            raise ConfigError("layout has no stations")
        self.layout = layout
        self.spec = fleet_spec
        self.cfg = dispatch_cfg
        self.invariant_checks = invariant_checks

        self.requests = sorted(requests, key=lambda r: (r.request_time, r.request_id))
        for r in self.requests:
            if r.request_time < 0:
                raise ConfigError(f"request {r.request_id} starts before the horizon")

        # taxis start fully charged, spread round-robin over the stations
        stations_sorted = list(layout)
        self.fleet = [
            ElectricTaxi(taxi_id=i,
                         position=stations_sorted[i % len(stations_sorted)].centroid,
                         soc=1.0,
                         battery_capacity=fleet_spec.battery_capacity,
                         consumption=fleet_spec.consumption)
            for i in range(fleet_spec.n_taxis)
        ]
        self.by_id = {t.taxi_id: t for t in self.fleet}
        self.stations = {s.station_id: ChargingStation(s.station_id, s.chargers)
                         for s in layout}
        self.dispatcher = Dispatcher(self.fleet, layout, dispatch_cfg)

        if demand_curve is not None:
            self._demand = dict(demand_curve.bins)
        else:
            self._demand = {}
            for r in self.requests:
                h = int(r.request_time)
                self._demand[h] = self._demand.get(h, 0) + 1

        # pickup-distance normalizer: 95th percentile of origin-to-station
        # distance over the request population, floored to stay usable
        if self.requests:
            dists = [manhattan(r.origin, layout.centroid(assign_subregion(r.origin, layout)))
                     for r in self.requests]
            self.d_ref = max(float(np.percentile(dists, 95)), 0.1)
        else:
            self.d_ref = 1.0

        self._default_service_h = fleet_spec.battery_capacity / fleet_spec.charge_power_kw
        self._heap: list = []
        self._seq = 0
        self._tick_scheduled = False
        self.event_log: list[dict] = []
        self._chart: list[tuple] = []  # (time, station_id, occupied, queue_len)
        self._waits_min: list[float] = []
        self._soc_drop_kwh = 0.0
        self._charged_kwh = 0.0
        self.total_fleet_km = 0.0
        self._ran = False

    # -- event plumbing ----------------------------------------------------

    def _push(self, time: float, kind: EventKind, payload) -> None:
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def _log(self, time: float, ev: str, **data) -> None:
        entry = {"t": time, "ev": ev}
        entry.update(data)
        self.event_log.append(entry)

    def _ensure_tick(self, now: float) -> None:
        if not self._tick_scheduled:
            self._push(now + TICK_HOURS, EventKind.WAITLIST_TICK, None)
            self._tick_scheduled = True

    def _log_station(self, now: float, station: ChargingStation) -> None:
        self._chart.append((now, station.station_id, station.occupied, len(station.queue)))

    # -- physics -----------------------------------------------------------

    def _drive(self, taxi: ElectricTaxi, km: float) -> None:
        if km == 0.0:
            return
        old = taxi.soc
        taxi.soc = old - km * taxi.consumption / taxi.battery_capacity
        self._soc_drop_kwh += (old - taxi.soc) * taxi.battery_capacity
        taxi.total_km += km
        self.total_fleet_km += km

    # -- scoring context ---------------------------------------------------

    def _context(self, now: float) -> ScoreContext:
        w_by_station = {}
        for sid, st in self.stations.items():
            params = estimate_params(st.stats, now, st.chargers, self._default_service_h)
            try:
                w = w_mgs(params)
            except UnstableQueueError:
                w = math.inf
            st.stats.w_estimate = w
            w_by_station[sid] = w
        finite = [w for w in w_by_station.values() if math.isfinite(w)]
        c1 = max(fmean(finite) if finite else 0.0, C1_FLOOR)
        u = {sid: utilization(w, c1) for sid, w in w_by_station.items()}
        return ScoreContext(
            now=now,
            demand=float(self._demand.get(int(now), 0)),
            d_ref=self.d_ref,
            mean_income=fmean(t.cumulative_income for t in self.fleet),
            u_by_station=u,
        )

    # -- event handlers ----------------------------------------------------

    def _schedule_pickup(self, now: float, assignment: Assignment) -> None:
        self._log(now, "assign", request=assignment.request.request_id,
                  taxi=assignment.taxi.taxi_id)
        eta = now + travel_time(assignment.pickup_km, self.spec.speed_kmh)
        self._push(eta, EventKind.PICKUP_COMPLETE, assignment)

    def _scan_waitlist(self, now: float) -> None:
        if not self.dispatcher.waitlist:
            return
        assignments, cancelled = self.dispatcher.process_waitlist(self._context(now))
        for a in assignments:
            self._schedule_pickup(now, a)
        for r in cancelled:
            self._log(now, "cancel", request=r.request_id,
                      waited_min=r.wait_minutes(now))

    def _on_request(self, now: float, request: RideRequest) -> None:
        # waitlisted requests outrank a new arrival at the same instant
        self._scan_waitlist(now)
        self._log(now, "request", request=request.request_id)
        assignment = self.dispatcher.handle_request(request, self._context(now))
        if assignment is None:
            self._ensure_tick(now)
        else:
            self._schedule_pickup(now, assignment)

    def _on_pickup(self, now: float, a: Assignment) -> None:
        taxi, request = a.taxi, a.request
        self._drive(taxi, a.pickup_km)
        taxi.position = request.origin
        request.pickup_time = now
        wait_min = request.wait_minutes(now)
        self._waits_min.append(wait_min)
        self._log(now, "pickup", request=request.request_id, taxi=taxi.taxi_id,
                  km=a.pickup_km, wait_min=wait_min)
        self._push(now + travel_time(request.trip_distance, self.spec.speed_kmh),
                   EventKind.DROPOFF_COMPLETE, a)

    def _on_dropoff(self, now: float, a: Assignment) -> None:
        taxi, request = a.taxi, a.request
        trip_km = request.trip_distance
        self._drive(taxi, trip_km)
        taxi.position = request.destination
        fare = self.cfg.fare(trip_km)
        taxi.cumulative_income += fare
        taxi.order_count += 1
        request.state = RequestState.COMPLETED
        self._log(now, "dropoff", request=request.request_id, taxi=taxi.taxi_id,
                  km=trip_km, fare=fare)
        station_id = self.dispatcher.post_trip_decision(taxi)
        if station_id is None:
            taxi.state = ETState.AVAILABLE
            taxi.empty_since = now
            self._scan_waitlist(now)
        else:
            taxi.state = ETState.TO_STATION
            leg = manhattan(taxi.position, self.layout.centroid(station_id))
            self._push(now + travel_time(leg, self.spec.speed_kmh),
                       EventKind.CHARGE_START, (taxi, station_id))

    def _begin_charging(self, now: float, taxi: ElectricTaxi,
                        station: ChargingStation) -> None:
        station.occupied += 1
        taxi.state = ETState.CHARGING
        duration = (1.0 - taxi.soc) * taxi.battery_capacity / self.spec.charge_power_kw
        if duration > 0:
            station.stats.record_service_time(duration)
        self._log(now, "charge_begin", taxi=taxi.taxi_id,
                  station=station.station_id, duration_h=duration)
        self._push(now + duration, EventKind.CHARGE_COMPLETE, (taxi, station.station_id))

    def _on_charge_start(self, now: float, taxi: ElectricTaxi, station_id: int) -> None:
        station = self.stations[station_id]
        leg = manhattan(taxi.position, self.layout.centroid(station_id))
        self._drive(taxi, leg)
        taxi.position = self.layout.centroid(station_id)
        station.stats.record_arrival(now)
        self._log(now, "charge_arrive", taxi=taxi.taxi_id, station=station_id, km=leg)
        if station.occupied < station.chargers:
            self._begin_charging(now, taxi, station)
        else:
            station.queue.append(taxi.taxi_id)
            taxi.state = ETState.QUEUED
        self._log_station(now, station)

    def _on_charge_complete(self, now: float, taxi: ElectricTaxi, station_id: int) -> None:
        station = self.stations[station_id]
        station.occupied -= 1
        self._charged_kwh += (1.0 - taxi.soc) * taxi.battery_capacity
        taxi.soc = 1.0
        taxi.state = ETState.AVAILABLE
        taxi.empty_since = now
        self._log(now, "charge_done", taxi=taxi.taxi_id, station=station_id)
        if station.queue:
            self._begin_charging(now, self.by_id[station.queue.popleft()], station)
        self._log_station(now, station)
        self._scan_waitlist(now)

    def _on_tick(self, now: float) -> None:
        self._tick_scheduled = False
        self._scan_waitlist(now)
        if self.dispatcher.waitlist:
            self._ensure_tick(now)

    # -- invariants ---------------------------------------------------------

    def _check_invariants(self) -> None:
        for t in self.fleet:
            assert -1e-12 <= t.soc <= 1.0 + 1e-12, \
                f"taxi {t.taxi_id} soc {t.soc} out of bounds"
        for st in self.stations.values():
            assert 0 <= st.occupied <= st.chargers, \
                f"station {st.station_id} occupancy {st.occupied}/{st.chargers}"
            assert not st.queue or st.occupied == st.chargers, \
                f"station {st.station_id} queue nonempty with a free charger"

    def _check_energy_balance(self) -> None:
        expected = self.total_fleet_km * self.spec.consumption
        if expected == 0.0 and self._soc_drop_kwh == 0.0:
            return
        rel = abs(self._soc_drop_kwh - expected) / max(abs(expected), 1e-300)
        assert rel <= 1e-9, \
            f"energy accounting drift: soc says {self._soc_drop_kwh}, km says {expected}"

    # -- main loop -----------------------------------------------------------

    def run(self) -> SimReport:
        if self._ran:
            raise RuntimeError("Simulation.run is single-shot; build a fresh instance")
        self._ran = True
        for r in self.requests:
            self._push(r.request_time, EventKind.REQUEST_ARRIVAL, r)

        while self._heap:
            now, _, kind, payload = heapq.heappop(self._heap)
            if kind is EventKind.REQUEST_ARRIVAL:
                self._on_request(now, payload)
            elif kind is EventKind.PICKUP_COMPLETE:
                self._on_pickup(now, payload)
            elif kind is EventKind.DROPOFF_COMPLETE:
                self._on_dropoff(now, payload)
            elif kind is EventKind.CHARGE_START:
                self._on_charge_start(now, payload[0], payload[1])
            elif kind is EventKind.CHARGE_COMPLETE:
                self._on_charge_complete(now, payload[0], payload[1])
            else:
                self._on_tick(now)
            if self.invariant_checks:
                self._check_invariants()

        if self.invariant_checks:
            self._check_energy_balance()
            unresolved = [r for r in self.requests
                          if r.state not in (RequestState.COMPLETED, RequestState.CANCELLED)]
            assert not unresolved, f"{len(unresolved)} requests never resolved"
        return self._build_report()

    def _build_report(self) -> SimReport:
        completed = sum(1 for r in self.requests if r.state is RequestState.COMPLETED)
        cancelled = sum(1 for r in self.requests if r.state is RequestState.CANCELLED)
        resolved = completed + cancelled
        fulfill = completed / resolved if resolved else 1.0

        last_hour = max((int(r.request_time) for r in self.requests), default=0)
        n_hours = 1 + max(last_hour, max(self._demand, default=0))
        per_hour = {h: {"requests": 0, "fulfilled": 0, "cancelled": 0, "waits": []}
                    for h in range(n_hours)}
        for r in self.requests:
            row = per_hour[int(r.request_time)]
            row["requests"] += 1
            if r.state is RequestState.COMPLETED:
                row["fulfilled"] += 1
                row["waits"].append(r.wait_minutes(r.pickup_time))
            elif r.state is RequestState.CANCELLED:
                row["cancelled"] += 1
        hours = tuple(
            HourRow(hour=h, requests=row["requests"], fulfilled=row["fulfilled"],
                    cancelled=row["cancelled"],
                    mean_wait_min=fmean(row["waits"]) if row["waits"] else 0.0)
            for h, row in sorted(per_hour.items())
        )
        return SimReport(
            n_requests=len(self.requests),
            completed=completed,
            cancelled=cancelled,
            fulfill_rate=fulfill,
            mean_wait_min=fmean(self._waits_min) if self._waits_min else 0.0,
            gini=gini([t.cumulative_income for t in self.fleet]),
            mean_distance_km=self.total_fleet_km / len(self.fleet),
            total_fleet_km=self.total_fleet_km,
            n_taxis=len(self.fleet),
            n_stations=len(self.stations),
            hours=hours,
            station_chart=tuple(self._chart),
            emissions=fleet_comparison(self.total_fleet_km),
        )
