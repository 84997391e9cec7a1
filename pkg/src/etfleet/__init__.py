"""Event-driven electric-taxi fleet dispatch simulator.

Pipeline: status records -> trips -> demand curve and K-means station
layout -> deterministic dispatch simulation with charging-queue estimates ->
metrics report and emission comparison.
"""

from .dispatch import (DispatchConfig, Dispatcher, ElectricTaxi, ETState, RequestState,
                       RideRequest, ScoreBreakdown, ScoreContext, f_demand,
                       reachability_test, score, select_candidate)
from .emissions import (ElectricityMix, EmissionFactors, FleetComparison, VehicleSpec,
                        ev_co2_per_100km, ev_coal_per_100km, fleet_comparison,
                        tv_co2_per_100km)
from .errors import ConfigError, DataError, RecordParseError
from .geo import (GeoPoint, KMeansFit, Station, StationLayout, adjacent_subregions,
                  assign_subregion, kmeans, lloyd, manhattan, project)
from .ingest import (DemandCurve, SyntheticSpec, TaxiRecord, Trip, TripExtraction,
                     build_demand_curve, extract_trips, generate_synthetic, parse_record,
                     read_records, read_trips_csv, serialize_record, write_trips_csv)
from .queueing import (QueueParams, SingularityError, StationStats, UnstableQueueError,
                       cosmetatos_h, des_oracle, estimate_params, matching_degree,
                       utilization, w_mds, w_mgs, w_mms)
from .scenario import (BuiltScenario, Scenario, build_scenario, load_config, load_scenario,
                       run_scenario, run_sweep, validate_config)
from .simkernel import (ChargingStation, EventKind, FleetSpec, HourRow, Simulation,
                        SimReport, gini, replay_totals, travel_time)

__version__ = "1.0.0"
