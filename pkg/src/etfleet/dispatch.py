"""Centralized platform logic: scoring, assignment, waitlist handling.

All clock values here are float hours from the scenario horizon start; the
simulation kernel owns the conversion to and from wall-clock datetimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import ConfigError
from .geo import GeoPoint, StationLayout, adjacent_subregions, assign_subregion, manhattan
from .queueing import matching_degree

INCOME_EPS = 1e-9


class ETState(Enum):
    AVAILABLE = "available"
    SERVING = "serving"
    TO_STATION = "to_station"
    CHARGING = "charging"
    QUEUED = "queued_at_station"


class RequestState(Enum):
    PENDING = "pending"
    WAITLISTED = "waitlisted"
    ASSIGNED = "assigned"
    COMPLETED = "completed"
    CANCELLED = "cancelled"


@dataclass
class ElectricTaxi:
    taxi_id: int
    position: GeoPoint
    soc: float
    battery_capacity: float  # kWh
    consumption: float       # kWh per km
    state: ETState = ETState.AVAILABLE
    cumulative_income: float = 0.0
    order_count: int = 0
    empty_since: float = 0.0  # hours; last time the taxi became available
    total_km: float = 0.0

    def range_km(self) -> float:
        return self.soc * self.battery_capacity / self.consumption


@dataclass
class RideRequest:
    request_id: int
    origin: GeoPoint
    destination: GeoPoint
    request_time: float  # hours
    state: RequestState = RequestState.PENDING
    assigned_taxi: int | None = None
    pickup_time: float | None = None

    @property
    def trip_distance(self) -> float:
        return manhattan(self.origin, self.destination)

    def wait_minutes(self, now: float) -> float:
        return (now - self.request_time) * 60.0


@dataclass(frozen=True)
class DispatchConfig:
    x: float = 0.01                        # demand-weight scale
    w1: float = -1.0                       # pickup distance (demand-amplified)
    w2: float = -0.5                       # cumulative income
    w3: float = 1.0                        # station/SOC matching degree
    w4: float = 0.0                        # empty time (off by default)
    soc_charge_threshold: float = 0.2
    wait_escalation_min: float = 5.0
    wait_cancel_min: float = 30.0
    reachability_buffer: float = 0.1
    adjacency_m: int = 3
    flag_fall: float = 13.0                # fare = flag_fall + per_km_rate * km
    per_km_rate: float = 2.3

    def __post_init__(self) -> None:
        if self.wait_escalation_min <= 0 or self.wait_cancel_min <= 0:
            raise ConfigError("wait thresholds must be positive")
        if self.wait_cancel_min <= self.wait_escalation_min:
            raise ConfigError(
                f"cancel threshold {self.wait_cancel_min} must exceed "
                f"escalation threshold {self.wait_escalation_min}")
        if self.reachability_buffer < 0:
            raise ConfigError("reachability buffer must be >= 0")
        if not 0.0 <= self.soc_charge_threshold <= 1.0:
            raise ConfigError("soc charge threshold must be in [0, 1]")
        if self.adjacency_m < 0:
            raise ConfigError("adjacency m must be >= 0")

    def fare(self, trip_km: float) -> float:
        return self.flag_fall + self.per_km_rate * trip_km


@dataclass(frozen=True)
class ScoreContext:
    """Snapshot of fleet-level quantities a scoring round needs.

    demand is the current hour's request count; d_ref normalizes pickup
    distance; u_by_station maps station_id to the utilization derived from
    its current queueing estimate.
    """

    now: float
    demand: float
    d_ref: float
    mean_income: float
    u_by_station: Mapping[int, float]


@dataclass(frozen=True)
class ScoreBreakdown:
    d_km: float
    d_norm: float
    income_norm: float
    matching: float
    empty_norm: float
    f_demand_value: float
    total: float


def f_demand(demand: float, x: float) -> float:
    """Demand-adaptive weight scale: x * sqrt(demand)."""
    if demand < 0:
        raise ValueError(f"demand must be >= 0, got {demand}")
    return x * math.sqrt(demand)


def reachability_test(taxi: ElectricTaxi, request: RideRequest,
                      layout: StationLayout, buffer: float = 0.1) -> bool:
    """Can the taxi serve the trip and still reach a charger afterwards?

    Energy for pickup leg + trip + destination-to-nearest-station leg, padded
    by the safety buffer, must fit in the current charge. Exact equality
    passes.
    """
    d_pickup = manhattan(taxi.position, request.origin)
    dest_station = assign_subregion(request.destination, layout)
    d_reserve = manhattan(request.destination, layout.centroid(dest_station))
    need = (d_pickup + request.trip_distance + d_reserve) * taxi.consumption * (1.0 + buffer)
    return taxi.soc * taxi.battery_capacity >= need


def predicted_soc_after(taxi: ElectricTaxi, request: RideRequest) -> float:
    d_pickup = manhattan(taxi.position, request.origin)
    used = (d_pickup + request.trip_distance) * taxi.consumption
    return max(0.0, taxi.soc - used / taxi.battery_capacity)


def score(taxi: ElectricTaxi, request: RideRequest, ctx: ScoreContext,
          cfg: DispatchConfig, layout: StationLayout) -> ScoreBreakdown:
    """Multi-objective candidate score; higher is better.

    total = f(demand)*w1*d_norm + w2*income_norm + w3*O + w4*empty_norm
    """
    d = manhattan(taxi.position, request.origin)
    d_norm = d / ctx.d_ref
    income_norm = taxi.cumulative_income / (ctx.mean_income + INCOME_EPS)
    dest_station = assign_subregion(request.destination, layout)
    u_n = ctx.u_by_station[dest_station]
    o = matching_degree(u_n, predicted_soc_after(taxi, request))
    empty_norm = min(max(ctx.now - taxi.empty_since, 0.0), 1.0)
    fd = f_demand(ctx.demand, cfg.x)
    total = fd * cfg.w1 * d_norm + cfg.w2 * income_norm + cfg.w3 * o + cfg.w4 * empty_norm
    return ScoreBreakdown(d_km=d, d_norm=d_norm, income_norm=income_norm,
                          matching=o, empty_norm=empty_norm,
                          f_demand_value=fd, total=total)


def select_candidate(candidates: Sequence[ElectricTaxi], request: RideRequest,
                     ctx: ScoreContext, cfg: DispatchConfig,
                     layout: StationLayout) -> ElectricTaxi | None:
    """Highest-scoring candidate; ties go to the smaller taxi id."""
    best = None
    best_key = None
    for taxi in candidates:
        total = score(taxi, request, ctx, cfg, layout).total
        key = (-total, taxi.taxi_id)
        if best_key is None or key < best_key:
            best, best_key = taxi, key
    return best


@dataclass(frozen=True)
class Assignment:
    request: RideRequest
    taxi: ElectricTaxi
    pickup_km: float


class Dispatcher:
    """Request intake, FIFO waitlist with escalation and cancellation.

    Owns fleet-state transitions for assignment; the kernel applies motion,
    energy, and income effects at event boundaries.
    """

    def __init__(self, fleet: Sequence[ElectricTaxi], layout: StationLayout,
                 cfg: DispatchConfig):
        self.fleet = list(fleet)
        self.layout = layout
        self.cfg = cfg
        self.waitlist: list[RideRequest] = []
        # adjacency is static under a fixed layout, so precompute it
        m = min(cfg.adjacency_m, len(layout) - 1)
        self._adjacent = {s.station_id: adjacent_subregions(s.station_id, layout, m) if m else []
                          for s in layout}

    def _available_in(self, station_ids: set[int]) -> list[ElectricTaxi]:
        return [t for t in self.fleet
                if t.state is ETState.AVAILABLE
                and assign_subregion(t.position, self.layout) in station_ids]

    def _assign(self, request: RideRequest, taxi: ElectricTaxi) -> Assignment:
        taxi.state = ETState.SERVING
        request.state = RequestState.ASSIGNED
        request.assigned_taxi = taxi.taxi_id
        return Assignment(request, taxi, manhattan(taxi.position, request.origin))

    def handle_request(self, request: RideRequest, ctx: ScoreContext) -> Assignment | None:
        """Steps 1-4 and 6: match within the origin sub-region or waitlist."""
        if request.state is not RequestState.PENDING:
            raise ValueError(f"request {request.request_id} is {request.state.value}, not pending")
        region = assign_subregion(request.origin, self.layout)
        candidates = [t for t in self._available_in({region})
                      if reachability_test(t, request, self.layout, self.cfg.reachability_buffer)]
        chosen = select_candidate(candidates, request, ctx, self.cfg, self.layout)
        if chosen is None:
            request.state = RequestState.WAITLISTED
            self.waitlist.append(request)
            return None
        return self._assign(request, chosen)

    def process_waitlist(self, ctx: ScoreContext) -> tuple[list[Assignment], list[RideRequest]]:
        """Steps 7-8: scan in FIFO order, escalate, cancel.

        Requests older than the escalation threshold also search the m
        adjacent sub-regions; older than the cancel threshold they are
        declined. Earlier requests claim taxis first within one scan.
        """
        assignments: list[Assignment] = []
        cancelled: list[RideRequest] = []
        remaining: list[RideRequest] = []
        for request in self.waitlist:
            waited = request.wait_minutes(ctx.now)
            if waited > self.cfg.wait_cancel_min:
                request.state = RequestState.CANCELLED
                cancelled.append(request)
                continue
            region = assign_subregion(request.origin, self.layout)
            regions = {region}
            if waited > self.cfg.wait_escalation_min:
                regions.update(self._adjacent[region])
            candidates = [t for t in self._available_in(regions)
                          if reachability_test(t, request, self.layout,
                                               self.cfg.reachability_buffer)]
            chosen = select_candidate(candidates, request, ctx, self.cfg, self.layout)
            if chosen is None:
                remaining.append(request)
            else:
                assignments.append(self._assign(request, chosen))
        self.waitlist = remaining
        return assignments, cancelled

    def post_trip_decision(self, taxi: ElectricTaxi) -> int | None:
        """Step 5: station id to charge at, or None to stay available."""
        if taxi.soc < self.cfg.soc_charge_threshold:
            return assign_subregion(taxi.position, self.layout)
        return None
