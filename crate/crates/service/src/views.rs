//! Wire shapes shared by the HTTP service and the CLI's JSON output. Money is
//! a 2-decimal string, CO₂ a number of kg rounded to 3 decimals.

use ecoprobe_core::analytics::{Tab, TabOrder};
use ecoprobe_core::cost::{Powertrain, VehicleCategory};
use ecoprobe_core::goal::{study_start_for, DEFAULT_WINDOW_DAYS};
use ecoprobe_core::{
    assign_windows, goal_status, DetectorConfig, Emission, GeoPoint, GoalKind, Metric, Money,
    PriceConfig, ProbeState, TimeRange, Totals, TransportMode, Trip, TripCostSummary,
    VehicleCatalog, VehicleProfile,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Engine settings the views are computed under.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub catalog: VehicleCatalog,
    pub prices: PriceConfig,
    pub detector: DetectorConfig,
    pub window_days: u32,
    pub utc_offset_minutes: i32,
    /// Include trip coordinates in trip listings.
    pub export_coordinates: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            catalog: VehicleCatalog::default(),
            prices: PriceConfig::default(),
            detector: DetectorConfig::default(),
            window_days: DEFAULT_WINDOW_DAYS,
            utc_offset_minutes: 0,
            export_coordinates: false,
        }
    }
}

pub fn money(m: Money) -> String {
    m.cents_string()
}

pub fn kg3(e: Emission) -> f64 {
    (e.kg() * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointView {
    pub lat: f64,
    pub lon: f64,
}

impl From<GeoPoint> for PointView {
    fn from(p: GeoPoint) -> Self {
        Self {
            lat: p.lat(),
            lon: p.lon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripView {
    pub id: String,
    pub start_ts: i64,
    pub end_ts: i64,
    pub distance_miles: f64,
    pub mode: TransportMode,
    /// Cost fields are null for trips that burn no fuel.
    pub cost: Option<String>,
    pub co2_kg: Option<f64>,
    pub eco_fraction: Option<f64>,
    pub potential_cost_saving: Option<String>,
    pub potential_co2_saving_kg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub origin: Option<PointView>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub destination: Option<PointView>,
}

impl TripView {
    fn build(trip: &Trip, summary: Option<&TripCostSummary>, coords: bool) -> Self {
        Self {
            id: trip.id.to_string(),
            start_ts: trip.start_ts,
            end_ts: trip.end_ts,
            distance_miles: (trip.distance_miles * 1000.0).round() / 1000.0,
            mode: trip.mode,
            cost: summary.map(|s| money(s.cost)),
            co2_kg: summary.map(|s| kg3(s.co2)),
            eco_fraction: summary.map(|s| s.eco_fraction),
            potential_cost_saving: summary.map(|s| money(s.potential_cost_saving)),
            potential_co2_saving_kg: summary.map(|s| kg3(s.potential_co2_saving)),
            origin: coords.then(|| trip.origin.into()),
            destination: coords.then(|| trip.destination.into()),
        }
    }
}

/// Non-deleted trips, newest first.
pub fn trip_list(state: &ProbeState, cfg: &EngineConfig) -> Result<Vec<TripView>, ApiError> {
    let summaries = state.summaries(&cfg.catalog, &cfg.prices)?;
    let mut trips: Vec<&Trip> = state.active_trips().collect();
    trips.sort_by(|a, b| b.start_ts.cmp(&a.start_ts).then_with(|| b.id.0.cmp(&a.id.0)));
    Ok(trips
        .into_iter()
        .map(|t| {
            let s = summaries.iter().find(|s| s.trip_id == t.id);
            TripView::build(t, s, cfg.export_coordinates)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalsView {
    pub trip_count: usize,
    pub cost: String,
    pub co2_kg: f64,
    pub potential_cost_saving: String,
    pub potential_co2_saving_kg: f64,
}

impl From<Totals> for TotalsView {
    fn from(t: Totals) -> Self {
        Self {
            trip_count: t.trip_count,
            cost: money(t.cost),
            co2_kg: kg3(t.co2),
            potential_cost_saving: money(t.potential_cost_saving),
            potential_co2_saving_kg: kg3(t.potential_co2_saving),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalView {
    pub kind: GoalKind,
    pub goal: Option<TotalsView>,
    pub current: TotalsView,
    pub message: Option<String>,
    pub window_index: Option<usize>,
    pub window_start_ts: Option<i64>,
    pub window_end_ts: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSel {
    All,
    Current,
}

impl std::str::FromStr for WindowSel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(WindowSel::All),
            "current" => Ok(WindowSel::Current),
            other => Err(format!("unknown window `{other}` (expected all or current)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryView {
    pub metric: Metric,
    pub window: WindowSel,
    pub totals: TotalsView,
    pub goal: GoalView,
}

/// Totals for the requested window plus the goal banner state at `now_ts`.
pub fn summary(
    state: &ProbeState,
    cfg: &EngineConfig,
    metric: Metric,
    window: WindowSel,
    now_ts: i64,
) -> Result<SummaryView, ApiError> {
    let summaries = state.summaries(&cfg.catalog, &cfg.prices)?;
    let no_goal = |current: Totals| GoalView {
        kind: GoalKind::NoGoalYet,
        goal: None,
        current: current.into(),
        message: None,
        window_index: None,
        window_start_ts: None,
        window_end_ts: None,
    };
    let (goal, current_range) = match state.study_start(cfg.utc_offset_minutes) {
        Some(start) if now_ts >= start => {
            let windows = assign_windows(&summaries, start, cfg.window_days, now_ts)?;
            let status = goal_status(&windows, metric, now_ts)?;
            let len = windows[0].end_ts - windows[0].start_ts;
            let k = ((now_ts - start) / len) as usize;
            let (ws, we) = (start + k as i64 * len, start + (k as i64 + 1) * len);
            let view = GoalView {
                kind: status.kind,
                goal: status.goal.map(Into::into),
                current: status.current.into(),
                message: status.message,
                window_index: Some(k),
                window_start_ts: Some(ws),
                window_end_ts: Some(we),
            };
            (view, TimeRange::between(ws, we))
        }
        // Before the first trip's day there is no window yet, so nothing is current.
        Some(start) => (no_goal(Totals::default()), TimeRange::between(start, start)),
        None => {
            let s = study_start_for(now_ts, cfg.utc_offset_minutes);
            (no_goal(Totals::default()), TimeRange::between(s, s))
        }
    };
    let range = match window {
        WindowSel::All => TimeRange::all(),
        WindowSel::Current => current_range,
    };
    Ok(SummaryView {
        metric,
        window,
        totals: ecoprobe_core::aggregate(&summaries, range).into(),
        goal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub category: VehicleCategory,
    pub powertrain: Powertrain,
    pub mpg: f64,
    pub co2_g_per_mile: Option<f64>,
}

impl From<&VehicleProfile> for VehicleView {
    fn from(v: &VehicleProfile) -> Self {
        Self {
            category: v.category,
            powertrain: v.powertrain,
            mpg: v.mpg_combined,
            co2_g_per_mile: v.co2_g_per_mile,
        }
    }
}

pub fn current_vehicle(state: &ProbeState, cfg: &EngineConfig) -> Result<VehicleView, ApiError> {
    Ok(cfg.catalog.lookup(state.vehicle_key())?.into())
}

pub fn catalog(cfg: &EngineConfig) -> Vec<VehicleView> {
    cfg.catalog.iter().map(Into::into).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabsView {
    pub order: TabOrder,
    pub tabs: Vec<Tab>,
}

pub fn tabs(state: &ProbeState) -> Result<TabsView, ApiError> {
    let order = state
        .tab_order
        .ok_or_else(|| ApiError::internal("tab order not initialized"))?;
    Ok(TabsView {
        order,
        tabs: order.tabs().to_vec(),
    })
}
