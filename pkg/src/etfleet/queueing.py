"""Charging-queue waiting times and the SOC matching degree.

Analytic side: exact Erlang C for M/M/s, the Cosmetatos-corrected M/D/s
form, and a two-moment interpolation between them for general service times.
Validation side: a discrete-event multi-server FIFO simulator driven by the
same parameters, kept fully independent of the formulas it checks.

All rates are per hour and all times are hours.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

# Interpolation parameter conventions, see `w_mgs`.
CONVENTION_CV = "cv"
CONVENTION_RECIPROCAL = "reciprocal"

# Samples kept for service-time statistics per station.
SERVICE_WINDOW = 200


class UnstableQueueError(ValueError):
    """Raised when lambda >= s*mu: the queue has no finite mean wait."""


class SingularityError(ValueError):
    """Raised where the literal-convention limit formula degenerates (s=1, sigma=0)."""


@dataclass(frozen=True)
class QueueParams:
    """Arrival/service statistics of one station's charging queue.

    lam: arrival rate (1/h). mu: service rate (1/h), the reciprocal of the
    mean charging time. sigma_t: standard deviation of the charging time in
    hours. s: charger count.
    """

    lam: float
    mu: float
    sigma_t: float
    s: int

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"arrival rate must be >= 0, got {self.lam}")
        if self.mu <= 0:
            raise ValueError(f"service rate must be > 0, got {self.mu}")
        if self.sigma_t < 0:
            raise ValueError(f"service-time stddev must be >= 0, got {self.sigma_t}")
        if self.s < 1:
            raise ValueError(f"charger count must be >= 1, got {self.s}")

    @property
    def rho(self) -> float:
        return self.lam / (self.s * self.mu)


def _check_stable(lam: float, mu: float, s: int) -> None:
    if mu <= 0:
        raise ValueError(f"service rate must be > 0, got {mu}")
    if lam < 0:
        raise ValueError(f"arrival rate must be >= 0, got {lam}")
    if s < 1:
        raise ValueError(f"server count must be >= 1, got {s}")
    if lam >= s * mu:
        raise UnstableQueueError(f"rho = {lam / (s * mu):.4f} >= 1 (lam={lam}, mu={mu}, s={s})")


def w_mms(lam: float, mu: float, s: int) -> float:
    """Mean queue wait of an M/M/s system (exact Erlang C), hours."""
    _check_stable(lam, mu, s)
    if lam == 0:
        return 0.0
    fac = math.factorial(s - 1)
    head = lam**s / (fac * (s * mu - lam) ** 2 * mu ** (s - 1))
    tail = sum((lam / mu) ** z / math.factorial(z) for z in range(s))
    tail += lam**s / (fac * (s * mu - lam) * mu ** (s - 1))
    return head / tail


def cosmetatos_h(s: int) -> float:
    """Server-count correction factor used by the M/D/s form; 0 at s=1."""
    if s < 1:
        raise ValueError(f"server count must be >= 1, got {s}")
    return (s - 1) / (16.0 * s) * (math.sqrt((10.0 * s + 8.0) / 2.0) - 2.0)


def w_mds(lam: float, mu: float, s: int) -> float:
    """Mean queue wait of an M/D/s system (Cosmetatos correction), hours.

    For s=1 the correction factor vanishes and the bracket is defined as 1,
    which reduces to the exact deterministic-service single-server result
    (half the M/M/1 wait).
    """
    _check_stable(lam, mu, s)
    if lam == 0:
        return 0.0
    base = w_mms(lam, mu, s)
    if s == 1:
        return 0.5 * base
    h = cosmetatos_h(s)
    spare = s * mu - lam
    bracket = 1.0 + h * spare / lam * (1.0 - math.exp(-lam * (s - 1) / (h * spare * (s + 1))))
    return 0.5 * bracket * base


def w_mgs(params: QueueParams, convention: str = CONVENTION_CV) -> float:
    """Mean queue wait of an M/G/s system via two-moment interpolation, hours.

    The interpolation weight is xi. Under the default "cv" convention
    xi = sigma_t * mu, the coefficient of variation of the service time, so
    xi=1 reproduces the M/M/s wait exactly and xi=0 the M/D/s wait. Under
    "reciprocal", xi = mu / sigma_t (sigma read as the reciprocal of the
    stddev); sigma_t = 0 then means xi -> infinity and the closed-form limit
        W_mm * W_md / (2*W_md - W_mm)
    is returned, which degenerates for s=1 where 2*W_md = W_mm.
    """
    _check_stable(params.lam, params.mu, params.s)
    if params.lam == 0:
        return 0.0
    wm = w_mms(params.lam, params.mu, params.s)
    wd = w_mds(params.lam, params.mu, params.s)
    if convention == CONVENTION_CV:
        xi = params.sigma_t * params.mu
    elif convention == CONVENTION_RECIPROCAL:
        if params.sigma_t == 0:
            denom = 2.0 * wd - wm
            if abs(denom) < 1e-15 * wm:
                raise SingularityError(
                    "xi->inf limit degenerates at s=1 with deterministic service (2*W_md == W_mm)"
                )
            return wm * wd / denom
        xi = params.mu / params.sigma_t
    else:
        raise ValueError(f"unknown convention {convention!r}")
    xi2 = xi * xi
    return (1.0 + xi2) * wm * wd / (2.0 * xi2 * wd + (1.0 - xi2) * wm)


@dataclass
class StationStats:
    """Rolling arrival/service statistics of one station.

    Arrival times are sim-clock hours; the arrival rate estimate is the count
    within the trailing 60 minutes. Service samples are charging durations in
    hours, kept in a bounded window.
    """

    station_id: int
    arrivals: deque = field(default_factory=deque)
    service_samples: deque = field(default_factory=lambda: deque(maxlen=SERVICE_WINDOW))
    w_estimate: float = 0.0

    def record_arrival(self, t: float) -> None:
        self.arrivals.append(t)

    def record_service_time(self, hours: float) -> None:
        if hours <= 0:
            raise ValueError(f"charging durations must be positive, got {hours}")
        self.service_samples.append(hours)

    def arrival_count_last_hour(self, now: float) -> int:
        while self.arrivals and self.arrivals[0] <= now - 1.0:
            self.arrivals.popleft()
        return len(self.arrivals)


def estimate_params(stats: StationStats, now: float, s: int,
                    default_mean_service_h: float, default_sigma_h: float = 0.0) -> QueueParams:
    """Queue parameters from a station's rolling window.

    lam is the trailing-hour arrival count; mu and sigma_t come from the
    service-time samples, falling back to the scenario defaults before the
    first charge completes.
    """
    lam = float(stats.arrival_count_last_hour(now))
    samples = stats.service_samples
    if samples:
        mean = sum(samples) / len(samples)
        var = sum((x - mean) ** 2 for x in samples) / len(samples)
        sigma_t = math.sqrt(var)
    else:
        mean = default_mean_service_h
        sigma_t = default_sigma_h
    return QueueParams(lam=lam, mu=1.0 / mean, sigma_t=sigma_t, s=s)


def utilization(w: float, c1: float) -> float:
    """Map a mean wait W in [0, inf) to a utilization level in [0, 1).

    c1 is the comparison scale, maintained by the caller as the running mean
    of all stations' current wait estimates (with a small positive floor).
    """
    if w < 0:
        raise ValueError(f"wait must be >= 0, got {w}")
    if c1 <= 0:
        raise ValueError(f"scale c1 must be > 0, got {c1}")
    if math.isinf(w):
        return 1.0
    return w / (c1 + w)


def matching_degree(u_n: float, soc_after: float, c2: float = -1.0, c3: float = 1.0) -> float:
    """Closeness of station utilization to a taxi's predicted post-trip SOC.

    With the default coefficients the degree is 1 - (u_n - soc_after)^2, so
    it lies in [0, 1] and peaks when a low-SOC taxi is matched to a lightly
    loaded station (and vice versa).
    """
    return c2 * (u_n - soc_after) ** 2 + c3


def _service_times(law: str, mu: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if law == "exponential":
        return rng.exponential(1.0 / mu, n)
    if law == "deterministic":
        return np.full(n, 1.0 / mu)
    if law.startswith("erlang"):
        try:
            k = int(law.split(":", 1)[1])
        except (IndexError, ValueError):
            raise ValueError(f"erlang law must be written 'erlang:<k>', got {law!r}")
        if k < 1:
            raise ValueError(f"erlang shape must be >= 1, got {k}")
        return rng.gamma(k, 1.0 / (k * mu), n)
    raise ValueError(f"unknown service law {law!r}")


def des_oracle(lam: float, mu: float, service_law: str, s: int, n_arrivals: int, seed: int) -> float:
    """Empirical mean queue wait of an M/G/s FIFO queue, by simulation.

    service_law is one of "exponential", "deterministic", "erlang:<k>".
    Deterministic for a fixed seed. Independent of the analytic formulas:
    the queue is simulated arrival by arrival against a heap of server
    free-times.
    """
    _check_stable(lam, mu, s)
    if n_arrivals == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0 / lam, n_arrivals)).tolist()
    services = _service_times(service_law, mu, n_arrivals, rng).tolist()
    free = [0.0] * s
    total_wait = 0.0
    for i in range(n_arrivals):
        t = arrivals[i]
        earliest = free[0]
        start = t if t >= earliest else earliest
        total_wait += start - t
        heapq.heappushpop(free, start + services[i])
    return total_wait / n_arrivals
