//! Offline engine for eco-driving field studies.
//!
//! Turns phone sensor traces into vehicle trips, prices each trip in fuel,
//! dollars and CO₂ (with counterfactual eco-driving savings), tracks 3-day
//! goal windows, and analyzes the participants' interaction logs.

pub mod analytics;
pub mod cost;
pub mod detect;
pub mod domain;
pub mod goal;
pub mod simulate;
pub mod store;
pub mod trace_io;

pub use cost::{
    aggregate, eco_fraction, trip_gallons, trip_summary, PriceConfig, TimeRange, Totals,
    TripCostSummary, VehicleCatalog, VehicleKey, VehicleProfile,
};
pub use detect::{classify_mode, detect_trips, path_distance, DetectorConfig, DistanceProvider, PathDistance};
pub use domain::{haversine_miles, Emission, GeoPoint, Money, TransportMode, Trip, TripId};
pub use goal::{assign_windows, goal_status, GoalKind, GoalStatus, GoalWindow, Metric, EXCEEDED_MESSAGE};
pub use simulate::{evaluate_detection, simulate, Scenario};
pub use store::{ProbeState, ProbeStore, StoreError, StoreOptions};
pub use trace_io::{
    parse_interaction_log, parse_trace, serialize_interaction_log, InteractionEvent, TraceFile, UiEvent,
};
