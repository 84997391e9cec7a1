"""Planar geometry: local projection, Manhattan metric, K-means station siting.

Distances used by dispatching are Manhattan (L1) distances on a local km
plane, matching grid-like urban road layouts. Clustering for station siting
uses squared Euclidean distance, for which the centroid is the per-cluster
optimum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

KM_PER_DEG_LAT = 110.57
KM_PER_DEG_LON = 111.32


@dataclass(frozen=True)
class GeoPoint:
    """A point on the scenario plane, km east/north of the reference."""

    x: float
    y: float


def project(lon: float, lat: float, ref_lon: float, ref_lat: float) -> GeoPoint:
    """Equirectangular projection of a lon/lat pair onto the local km plane.

    The east-west scale is frozen at the reference latitude, which keeps the
    mapping affine (hence injective) over city-sized windows.
    """
    x = (lon - ref_lon) * math.cos(math.radians(ref_lat)) * KM_PER_DEG_LON
    y = (lat - ref_lat) * KM_PER_DEG_LAT
    return GeoPoint(x, y)


def manhattan(a: GeoPoint, b: GeoPoint) -> float:
    """L1 distance in km."""
    return abs(a.x - b.x) + abs(a.y - b.y)


@dataclass(frozen=True)
class Station:
    station_id: int
    centroid: GeoPoint
    chargers: int


class StationLayout:
    """Charging stations indexed by a dense id range 0..k-1."""

    def __init__(self, stations: Sequence[Station]):
        stations = list(stations)
        if not stations:
            raise ConfigError("station layout must contain at least one station")
        ids = sorted(s.station_id for s in stations)
        if ids != list(range(len(stations))):
            raise ConfigError("station ids must be unique and dense 0..k-1")
        if any(s.chargers < 1 for s in stations):
            raise ConfigError("every station needs at least one charger")
        self.stations = sorted(stations, key=lambda s: s.station_id)

    def __len__(self) -> int:
        return len(self.stations)

    def __iter__(self):
        return iter(self.stations)

    def centroid(self, station_id: int) -> GeoPoint:
        return self.stations[station_id].centroid


def assign_subregion(p: GeoPoint, layout: StationLayout) -> int:
    """Id of the station nearest to p (Manhattan); ties go to the smaller id."""
    best_id = 0
    best_d = math.inf
    for s in layout:
        d = manhattan(p, s.centroid)
        if d < best_d:
            best_d = d
            best_id = s.station_id
    return best_id


def adjacent_subregions(station_id: int, layout: StationLayout, m: int) -> list[int]:
    """The m stations nearest to station_id, ascending by centroid distance.

    Ties break toward the smaller id; the station itself is never included.
    """
    if m >= len(layout):
        raise ConfigError(f"adjacency m={m} must be smaller than station count {len(layout)}")
    home = layout.centroid(station_id)
    others = [(manhattan(home, s.centroid), s.station_id) for s in layout if s.station_id != station_id]
    others.sort()
    return [sid for _, sid in others[:m]]


@dataclass
class KMeansFit:
    """Lloyd iteration diagnostics.

    objective[i] is the within-cluster squared-Euclidean sum measured at the
    assignment step of iteration i; the sequence is non-increasing.
    """

    centroids: np.ndarray
    labels: np.ndarray
    objective: list[float]
    n_iter: int


def lloyd(xy: np.ndarray, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6) -> KMeansFit:
    """Lloyd's algorithm with farthest-point seeding.

    Seeding: the first centroid is a seeded-random point, each further one is
    the point farthest from its nearest already-chosen centroid. Empty
    clusters are re-seeded to the point currently farthest from its assigned
    centroid. Deterministic for a fixed seed.
    """
    n = len(xy)
    if not 1 <= k <= n:
        raise ConfigError(f"k-means needs 1 <= k <= n points, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    xy = np.asarray(xy, dtype=float)

    centroids = np.empty((k, 2))
    centroids[0] = xy[rng.integers(n)]
    d2 = ((xy - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        centroids[j] = xy[int(np.argmax(d2))]
        d2 = np.minimum(d2, ((xy - centroids[j]) ** 2).sum(axis=1))

    objective: list[float] = []
    labels = np.zeros(n, dtype=int)
    for it in range(max_iter):
        dists = ((xy[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(dists, axis=1)
        assigned = dists[np.arange(n), labels]
        objective.append(float(assigned.sum()))

        # Re-seed empty clusters by stealing the worst-assigned point.
        counts = np.bincount(labels, minlength=k)
        stealable = assigned.copy()
        for j in np.flatnonzero(counts == 0):
            p = int(np.argmax(stealable))
            labels[p] = j
            stealable[p] = -1.0

        new_centroids = centroids.copy()
        for j in range(k):
            members = xy[labels == j]
            if len(members):
                new_centroids[j] = members.mean(axis=0)
        shift = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if shift < tol:
            break
    return KMeansFit(centroids=centroids, labels=labels, objective=objective, n_iter=len(objective))


def kmeans(points: Sequence[GeoPoint], k: int, seed: int = 0, max_iter: int = 100,
           tol: float = 1e-6, chargers_per_station: int = 2) -> StationLayout:
    """Cluster points and place one station with a uniform charger count at each centroid."""
    xy = np.array([(p.x, p.y) for p in points], dtype=float)
    fit = lloyd(xy, k, seed=seed, max_iter=max_iter, tol=tol)
    stations = [Station(j, GeoPoint(float(cx), float(cy)), chargers_per_station)
                for j, (cx, cy) in enumerate(fit.centroids)]
    return StationLayout(stations)


LAYOUT_HEADER = ["station_id", "x_km", "y_km", "chargers"]


def write_layout_csv(layout: StationLayout, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LAYOUT_HEADER)
        for s in layout:
            w.writerow([s.station_id, repr(s.centroid.x), repr(s.centroid.y), s.chargers])


def read_layout_csv(path: str | Path) -> StationLayout:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"cannot read layout file {path}: {e}") from e
    if not rows or rows[0] != LAYOUT_HEADER:
        raise DataError(f"layout file {path} must start with header {','.join(LAYOUT_HEADER)}")
    stations = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise DataError(f"layout file {path} line {i}: expected 4 fields")
        try:
            stations.append(Station(int(row[0]), GeoPoint(float(row[1]), float(row[2])), int(row[3])))
        except ValueError as e:
            raise DataError(f"layout file {path} line {i}: {e}") from e
    try:
        return StationLayout(stations)
    except ConfigError as e:
        # invariant failures in a file are a data problem, not a config one
        raise DataError(f"layout file {path}: {e}") from e
