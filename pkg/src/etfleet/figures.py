"""Report figures. Headless-safe: renders straight to files via Agg."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .geo import StationLayout, assign_subregion
from .simkernel import SimReport

plt.rcParams.update({
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
})


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_demand(hours: Sequence[int], counts: Sequence[int], path: str | Path) -> Path:
    fig, ax = plt.subplots()
    ax.bar(hours, counts, color="#4878a8", width=0.85)
    ax.set_xlabel("hour of horizon")
    ax.set_ylabel("ride requests")
    ax.set_title("Hourly demand")
    return save(fig, path)


def plot_hourly(report: SimReport, path: str | Path) -> Path:
    hours = [h.hour for h in report.hours]
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax.plot(hours, [h.requests for h in report.hours], marker="o", label="requests")
    ax.plot(hours, [h.fulfilled for h in report.hours], marker="s", label="fulfilled")
    ax.plot(hours, [h.cancelled for h in report.hours], marker="x", label="cancelled")
    ax.set_xlabel("hour")
    ax.set_ylabel("count")
    ax.legend()
    ax.set_title("Requests by outcome")
    ax2.plot(hours, [h.mean_wait_min for h in report.hours], marker="o", color="#a85448")
    ax2.set_xlabel("hour")
    ax2.set_ylabel("mean wait (min)")
    ax2.set_title("Passenger waiting time")
    return save(fig, path)


def plot_station_chart(chart: Sequence[tuple], path: str | Path) -> Path:
    """Occupancy and queue length step lines, one panel per station."""
    by_station: dict[int, list[tuple]] = {}
    for t, sid, occ, qlen in chart:
        by_station.setdefault(sid, []).append((t, occ, qlen))
    n = max(len(by_station), 1)
    ncols = min(n, 4)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.4 * nrows),
                             squeeze=False, sharex=True)
    flat = axes.ravel()
    for ax, sid in zip(flat, sorted(by_station)):
        rows = by_station[sid]
        ts = [r[0] for r in rows]
        ax.step(ts, [r[1] for r in rows], where="post", label="charging")
        ax.step(ts, [r[2] for r in rows], where="post", label="queued")
        ax.set_title(f"station {sid}", fontsize=9)
    for ax in flat[len(by_station):]:
        ax.set_axis_off()
    if by_station:
        flat[0].legend(fontsize=8)
    fig.supxlabel("time (h)")
    fig.suptitle("Station operation", y=1.02)
    return save(fig, path)


def plot_layout(layout: StationLayout, origins: Sequence, path: str | Path) -> Path:
    """Request origins colored by their sub-region, centroids marked."""
    fig, ax = plt.subplots(figsize=(6, 6))
    if origins:
        labels = [assign_subregion(p, layout) for p in origins]
        xs = [p.x for p in origins]
        ys = [p.y for p in origins]
        ax.scatter(xs, ys, c=labels, s=6, alpha=0.4, cmap="tab20")
    cx = [s.centroid.x for s in layout]
    cy = [s.centroid.y for s in layout]
    ax.scatter(cx, cy, marker="*", s=220, c="black", label="stations", zorder=3)
    for s in layout:
        ax.annotate(str(s.station_id), (s.centroid.x, s.centroid.y),
                    textcoords="offset points", xytext=(6, 4), fontsize=8)
    ax.set_xlabel("x (km)")
    ax.set_ylabel("y (km)")
    ax.set_title("Charging stations and demand")
    ax.set_aspect("equal")
    ax.legend()
    return save(fig, path)


def plot_lorenz(incomes: Sequence[float], gini_value: float, path: str | Path) -> Path:
    vals = np.sort(np.asarray(incomes, dtype=float))
    total = vals.sum()
    fig, ax = plt.subplots(figsize=(5, 5))
    if total > 0:
        frac_pop = np.arange(len(vals) + 1) / len(vals)
        frac_income = np.concatenate([[0.0], np.cumsum(vals)]) / total
        ax.plot(frac_pop, frac_income, label="income")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", label="equality")
    ax.set_xlabel("driver share")
    ax.set_ylabel("income share")
    ax.set_title(f"Driver income (Gini {gini_value:.3f})")
    ax.legend()
    return save(fig, path)


def plot_sweep(rows: Sequence[tuple[float, SimReport]], path: str | Path) -> Path:
    """Four headline metrics against the demand-weight scale x."""
    xs = [x for x, _ in rows]
    panels = [
        ("mean wait (min)", [r.mean_wait_min for _, r in rows]),
        ("Gini coefficient", [r.gini for _, r in rows]),
        ("fulfill rate", [r.fulfill_rate for _, r in rows]),
        ("mean distance (km)", [r.mean_distance_km for _, r in rows]),
    ]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for ax, (label, ys) in zip(axes.ravel(), panels):
        ax.plot(xs, ys, marker="o")
        ax.set_xscale("log")
        ax.set_xlabel("x")
        ax.set_ylabel(label)
    fig.suptitle("Sensitivity to f(demand) scale")
    fig.tight_layout()
    return save(fig, path)


def plot_oracle(rows: Sequence[dict], path: str | Path) -> Path:
    """Analytic vs simulated waits per queue configuration."""
    fig, ax = plt.subplots()
    idx = np.arange(len(rows))
    width = 0.38
    ax.bar(idx - width / 2, [r["analytic"] for r in rows], width, label="analytic")
    ax.bar(idx + width / 2, [r["simulated"] for r in rows], width, label="simulated")
    ax.set_xticks(idx)
    ax.set_xticklabels([f"{r['law']}\ns={r['s']} rho={r['rho']:.2f}" for r in rows],
                       fontsize=7)
    ax.set_ylabel("mean wait (h)")
    ax.set_title("Queueing formulas vs event simulation")
    ax.legend()
    return save(fig, path)
