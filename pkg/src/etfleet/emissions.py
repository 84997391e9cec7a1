"""Carbon accounting: gasoline fleet vs electric fleet charged off the grid.

Electric-side emissions attribute all thermal generation to coal; renewable
and nuclear shares count as zero. Combustion-side emissions use a flat CO2
mass per litre of gasoline. Both are per-100km rates scaled by fleet km.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import fmean
from typing import Sequence

from .errors import ConfigError


@dataclass(frozen=True)
class ElectricityMix:
    """Generation shares by source, 2016 national grid defaults."""

    thermal: float = 0.721
    hydro: float = 0.1886
    wind: float = 0.0395
    solar: float = 0.0108
    pumped_storage: float = 0.005
    nuclear: float = 0.0349

    def __post_init__(self) -> None:
        for name in ("thermal", "hydro", "wind", "solar", "pumped_storage", "nuclear"):
            share = getattr(self, name)
            if not 0.0 <= share <= 1.0:
                raise ConfigError(f"mix share {name}={share} outside [0, 1]")


@dataclass(frozen=True)
class EmissionFactors:
    co2_per_litre_oil: float = 2.3   # kg CO2 per litre of gasoline
    co2_per_kg_coal: float = 2.38    # kg CO2 per kg of coal burned
    kwh_per_kg_coal: float = 3.21    # electric energy yielded per kg of coal

    def __post_init__(self) -> None:
        for name in ("co2_per_litre_oil", "co2_per_kg_coal", "kwh_per_kg_coal"):
            value = getattr(self, name)
            if value <= 0:
                raise ConfigError(f"emission factor {name}={value} must be positive")


@dataclass(frozen=True)
class VehicleSpec:
    """One vehicle model: L/100km for combustion, kWh/100km for electric."""

    label: str
    consumption_per_100km: float

    def __post_init__(self) -> None:
        if self.consumption_per_100km <= 0:
            raise ConfigError(f"{self.label}: consumption must be positive")


# Three representative gasoline models and two representative electric models;
# fleet rates are the plain means over each group.
DEFAULT_TV_SPECS = (
    VehicleSpec("Toyota Yaris L", 6.72),
    VehicleSpec("Chevrolet Sonic", 7.59),
    VehicleSpec("Ford Escape", 9.95),
)
DEFAULT_EV_SPECS = (
    VehicleSpec("Geely Emgrand EV", 15.8),
    VehicleSpec("BYD Qin Pro DM", 17.5),
)


def tv_co2_per_100km(specs: Sequence[VehicleSpec] = DEFAULT_TV_SPECS,
                     factors: EmissionFactors = EmissionFactors()) -> float:
    """Mean combustion-fleet CO2 in kg per 100 km."""
    if not specs:
        raise ConfigError("need at least one vehicle spec")
    return fmean(s.consumption_per_100km for s in specs) * factors.co2_per_litre_oil


def ev_coal_per_100km(specs: Sequence[VehicleSpec] = DEFAULT_EV_SPECS,
                      mix: ElectricityMix = ElectricityMix(),
                      factors: EmissionFactors = EmissionFactors()) -> float:
    """Coal burned, kg per 100 km of electric driving."""
    if not specs:
        raise ConfigError("need at least one vehicle spec")
    mean_kwh = fmean(s.consumption_per_100km for s in specs)
    return mean_kwh * mix.thermal / factors.kwh_per_kg_coal


def ev_co2_per_100km(specs: Sequence[VehicleSpec] = DEFAULT_EV_SPECS,
                     mix: ElectricityMix = ElectricityMix(),
                     factors: EmissionFactors = EmissionFactors()) -> float:
    """Mean electric-fleet CO2 in kg per 100 km, coal-generation share only."""
    return ev_coal_per_100km(specs, mix, factors) * factors.co2_per_kg_coal


@dataclass(frozen=True)
class FleetComparison:
    total_km: float
    tv_kg: float
    ev_kg: float
    reduction_fraction: float


def fleet_comparison(total_fleet_km: float,
                     tv_rate: float | None = None,
                     ev_rate: float | None = None) -> FleetComparison:
    """Total emissions had the fleet burned gasoline vs charging off the grid.

    The reduction fraction is a ratio of the per-km rates, so it is defined
    even at zero fleet km.
    """
    if total_fleet_km < 0:
        raise ConfigError(f"total fleet km must be >= 0, got {total_fleet_km}")
    if tv_rate is None:
        tv_rate = tv_co2_per_100km()
    if ev_rate is None:
        ev_rate = ev_co2_per_100km()
    if tv_rate <= 0:
        raise ConfigError(f"combustion rate must be positive, got {tv_rate}")
    if ev_rate < 0:
        raise ConfigError(f"electric rate must be >= 0, got {ev_rate}")
    return FleetComparison(
        total_km=total_fleet_km,
        tv_kg=total_fleet_km * tv_rate / 100.0,
        ev_kg=total_fleet_km * ev_rate / 100.0,
        reduction_fraction=1.0 - ev_rate / tv_rate,
    )
