//! Fuel, cost and CO₂ accounting per trip, tiered eco-driving savings, and
//! aggregation over trip sets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, Emission, Money, TransportMode, Trip, TripId};

/// Savings fraction for short (city) trips.
pub const CITY_ECO_FRACTION: f64 = 0.175;
/// Savings fraction for long (highway) trips.
pub const HIGHWAY_ECO_FRACTION: f64 = 0.039;
pub const CITY_MAX_MILES: f64 = 5.0;
pub const HIGHWAY_MIN_MILES: f64 = 15.0;

/// Catalog shipped with the crate.
pub const DEFAULT_CATALOG_CSV: &str = include_str!("../data/vehicles.csv");
const CATALOG_HEADER: &str = "category,powertrain,mpg,co2_g_per_mile";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("distance must be finite and non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("trip {0} is not a fuel trip (mode {1})")]
    NotAFuelTrip(TripId, &'static str),
    #[error("invalid vehicle: {0}")]
    InvalidVehicle(String),
    #[error("invalid price config: {0}")]
    InvalidPrice(String),
    #[error("vehicle catalog line {line}: {reason}")]
    Catalog { line: usize, reason: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleCategory {
    SmallCar,
    MidsizeCar,
    LargeCar,
    Suv,
    Minivan,
    Truck,
    StationWagon,
    SportsCar,
}

impl VehicleCategory {
    pub const ALL: [VehicleCategory; 8] = [
        VehicleCategory::SmallCar,
        VehicleCategory::MidsizeCar,
        VehicleCategory::LargeCar,
        VehicleCategory::Suv,
        VehicleCategory::Minivan,
        VehicleCategory::Truck,
        VehicleCategory::StationWagon,
        VehicleCategory::SportsCar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VehicleCategory::SmallCar => "small_car",
            VehicleCategory::MidsizeCar => "midsize_car",
            VehicleCategory::LargeCar => "large_car",
            VehicleCategory::Suv => "suv",
            VehicleCategory::Minivan => "minivan",
            VehicleCategory::Truck => "truck",
            VehicleCategory::StationWagon => "station_wagon",
            VehicleCategory::SportsCar => "sports_car",
        }
    }
}

impl FromStr for VehicleCategory {
    type Err = CostError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VehicleCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| CostError::InvalidVehicle(format!("unknown category `{s}`")))
    }
}

impl fmt::Display for VehicleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Powertrain {
    #[serde(rename = "ICE")]
    Ice,
    #[serde(rename = "HEV")]
    Hev,
}

impl Powertrain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Powertrain::Ice => "ICE",
            Powertrain::Hev => "HEV",
        }
    }
}

impl FromStr for Powertrain {
    type Err = CostError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ICE" => Ok(Powertrain::Ice),
            "HEV" => Ok(Powertrain::Hev),
            _ => Err(CostError::InvalidVehicle(format!("unknown powertrain `{s}`"))),
        }
    }
}

impl fmt::Display for Powertrain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Catalog key: a category × powertrain pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleKey {
    pub category: VehicleCategory,
    pub powertrain: Powertrain,
}

impl Default for VehicleKey {
    fn default() -> Self {
        Self {
            category: VehicleCategory::MidsizeCar,
            powertrain: Powertrain::Ice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleProfile {
    pub category: VehicleCategory,
    pub powertrain: Powertrain,
    pub mpg_combined: f64,
    pub co2_g_per_mile: Option<f64>,
}

impl VehicleProfile {
    pub fn new(
        category: VehicleCategory,
        powertrain: Powertrain,
        mpg_combined: f64,
        co2_g_per_mile: Option<f64>,
    ) -> Result<Self, CostError> {
        if !(mpg_combined.is_finite() && mpg_combined > 0.0) {
            return Err(CostError::InvalidVehicle(format!("mpg must be positive, got {mpg_combined}")));
        }
        if let Some(g) = co2_g_per_mile {
            if !(g.is_finite() && g > 0.0) {
                return Err(CostError::InvalidVehicle(format!(
                    "co2 override must be positive, got {g}"
                )));
            }
        }
        Ok(Self {
            category,
            powertrain,
            mpg_combined,
            co2_g_per_mile,
        })
    }

    pub fn key(&self) -> VehicleKey {
        VehicleKey {
            category: self.category,
            powertrain: self.powertrain,
        }
    }
}

/// Read-only table of vehicle profiles keyed by category and powertrain.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleCatalog {
    profiles: BTreeMap<VehicleKey, VehicleProfile>,
}

impl VehicleCatalog {
    pub fn parse(text: &str) -> Result<Self, CostError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == CATALOG_HEADER => {}
            _ => {
                return Err(CostError::Catalog {
                    line: 1,
                    reason: format!("expected header `{CATALOG_HEADER}`"),
                })
            }
        }
        let mut profiles = BTreeMap::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let err = |reason: String| CostError::Catalog {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, got {}", fields.len())));
            }
            let category: VehicleCategory = fields[0].parse().map_err(|e: CostError| err(e.to_string()))?;
            let powertrain: Powertrain = fields[1].parse().map_err(|e: CostError| err(e.to_string()))?;
            let mpg: f64 = fields[2].parse().map_err(|_| err(format!("bad mpg `{}`", fields[2])))?;
            let co2 = match fields[3] {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| err(format!("bad co2 `{s}`")))?),
            };
            let profile = VehicleProfile::new(category, powertrain, mpg, co2).map_err(|e| err(e.to_string()))?;
            if profiles.insert(profile.key(), profile).is_some() {
                return Err(err(format!("duplicate entry {category}/{powertrain}")));
            }
        }
        Ok(Self { profiles })
    }

    pub fn get(&self, key: VehicleKey) -> Option<&VehicleProfile> {
        self.profiles.get(&key)
    }

    pub fn lookup(&self, key: VehicleKey) -> Result<&VehicleProfile, CostError> {
        self.get(key).ok_or_else(|| {
            CostError::InvalidVehicle(format!("{}/{} is not in the catalog", key.category, key.powertrain))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &VehicleProfile> {
        self.profiles.values()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

impl Default for VehicleCatalog {
    fn default() -> Self {
        VehicleCatalog::parse(DEFAULT_CATALOG_CSV).expect("bundled catalog parses")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceConfig {
    pub fuel_usd_per_gal: f64,
    /// EPA tailpipe CO₂ per gallon of gasoline.
    pub co2_kg_per_gal: f64,
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self {
            fuel_usd_per_gal: 3.85,
            co2_kg_per_gal: 8.887,
        }
    }
}

impl PriceConfig {
    pub fn validate(&self) -> Result<(), CostError> {
        for (name, v) in [
            ("fuel_usd_per_gal", self.fuel_usd_per_gal),
            ("co2_kg_per_gal", self.co2_kg_per_gal),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CostError::InvalidPrice(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Share of fuel an eco-driving style would save on a trip of this length:
/// flat 17.5% up to 5 mi, flat 3.9% from 15 mi, linear in between.
pub fn eco_fraction(distance_miles: f64) -> Result<f64, CostError> {
    if !(distance_miles.is_finite() && distance_miles >= 0.0) {
        return Err(CostError::NegativeDistance(distance_miles));
    }
    Ok(if distance_miles <= CITY_MAX_MILES {
        CITY_ECO_FRACTION
    } else if distance_miles >= HIGHWAY_MIN_MILES {
        HIGHWAY_ECO_FRACTION
    } else {
        let t = (distance_miles - CITY_MAX_MILES) / (HIGHWAY_MIN_MILES - CITY_MAX_MILES);
        CITY_ECO_FRACTION - t * (CITY_ECO_FRACTION - HIGHWAY_ECO_FRACTION)
    })
}

pub fn trip_gallons(trip: &Trip, vehicle: &VehicleProfile) -> Result<f64, CostError> {
    if trip.mode != TransportMode::Automotive {
        return Err(CostError::NotAFuelTrip(trip.id.clone(), trip.mode.as_str()));
    }
    if !(trip.distance_miles.is_finite() && trip.distance_miles >= 0.0) {
        return Err(CostError::NegativeDistance(trip.distance_miles));
    }
    Ok(trip.distance_miles / vehicle.mpg_combined)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripCostSummary {
    pub trip_id: TripId,
    pub start_ts: i64,
    pub distance_miles: f64,
    pub gallons: f64,
    pub cost: Money,
    pub co2: Emission,
    pub eco_fraction: f64,
    pub potential_cost_saving: Money,
    pub potential_co2_saving: Emission,
}

pub fn trip_summary(
    trip: &Trip,
    vehicle: &VehicleProfile,
    prices: &PriceConfig,
) -> Result<TripCostSummary, CostError> {
    prices.validate()?;
    let gallons = trip_gallons(trip, vehicle)?;
    let cost = Money::from_usd(gallons * prices.fuel_usd_per_gal)?;
    let co2_kg = match vehicle.co2_g_per_mile {
        Some(g) => trip.distance_miles * g / 1000.0,
        None => gallons * prices.co2_kg_per_gal,
    };
    let co2 = Emission::from_kg(co2_kg)?;
    let eco = eco_fraction(trip.distance_miles)?;
    Ok(TripCostSummary {
        trip_id: trip.id.clone(),
        start_ts: trip.start_ts,
        distance_miles: trip.distance_miles,
        gallons,
        cost,
        co2,
        eco_fraction: eco,
        potential_cost_saving: cost.scaled(eco),
        potential_co2_saving: co2.scaled(eco),
    })
}

/// Half-open `[start, end)` interval of Unix ms; `None` bounds are unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimeRange {
    pub start: Option<i64>,
    pub end: Option<i64>,
}

impl TimeRange {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn between(start: i64, end: i64) -> Self {
        Self {
            start: Some(start),
            end: Some(end),
        }
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.start.is_none_or(|s| ts >= s) && self.end.is_none_or(|e| ts < e)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub trip_count: usize,
    pub cost: Money,
    pub co2: Emission,
    pub potential_cost_saving: Money,
    pub potential_co2_saving: Emission,
}

impl Totals {
    pub fn add(&mut self, s: &TripCostSummary) {
        self.trip_count += 1;
        self.cost = self.cost + s.cost;
        self.co2 = self.co2 + s.co2;
        self.potential_cost_saving = self.potential_cost_saving + s.potential_cost_saving;
        self.potential_co2_saving = self.potential_co2_saving + s.potential_co2_saving;
    }

    pub fn merge(&self, other: &Totals) -> Totals {
        Totals {
            trip_count: self.trip_count + other.trip_count,
            cost: self.cost + other.cost,
            co2: self.co2 + other.co2,
            potential_cost_saving: self.potential_cost_saving + other.potential_cost_saving,
            potential_co2_saving: self.potential_co2_saving + other.potential_co2_saving,
        }
    }
}

/// Field-wise sums over summaries whose trip started inside `range`.
pub fn aggregate<'a, I>(summaries: I, range: TimeRange) -> Totals
where
    I: IntoIterator<Item = &'a TripCostSummary>,
{
    let mut totals = Totals::default();
    for s in summaries.into_iter().filter(|s| range.contains(s.start_ts)) {
        totals.add(s);
    }
    totals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GeoPoint;
    use proptest::prelude::*;

    fn trip(id: &str, start_ts: i64, miles: f64) -> Trip {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        Trip {
            id: TripId::from(id),
            start_ts,
            end_ts: start_ts + 60_000,
            origin: p,
            destination: p,
            distance_miles: miles,
            mode: TransportMode::Automotive,
            deleted: false,
        }
    }

    fn car(mpg: f64) -> VehicleProfile {
        VehicleProfile::new(VehicleCategory::MidsizeCar, Powertrain::Ice, mpg, None).unwrap()
    }

    #[test]
    fn eco_fraction_tiers() {
        assert_eq!(eco_fraction(3.0).unwrap(), 0.175);
        assert_eq!(eco_fraction(0.0).unwrap(), 0.175);
        assert_eq!(eco_fraction(5.0).unwrap(), 0.175);
        assert_eq!(eco_fraction(15.0).unwrap(), 0.039);
        assert_eq!(eco_fraction(20.0).unwrap(), 0.039);
        assert!((eco_fraction(10.0).unwrap() - 0.107).abs() < 1e-12);
        assert!(matches!(eco_fraction(-0.1), Err(CostError::NegativeDistance(_))));
        assert!(eco_fraction(f64::NAN).is_err());
    }

    #[test]
    fn gallons_examples() {
        assert_eq!(trip_gallons(&trip("a", 1, 30.0), &car(30.0)).unwrap(), 1.0);
        assert_eq!(trip_gallons(&trip("a", 1, 0.0), &car(30.0)).unwrap(), 0.0);
        assert_eq!(trip_gallons(&trip("a", 1, 10.0), &car(32.0)).unwrap(), 0.3125);
        let mut walk = trip("w", 1, 2.0);
        walk.mode = TransportMode::Walking;
        let err = trip_gallons(&walk, &car(30.0)).unwrap_err();
        assert!(err.to_string().contains("not a fuel trip"));
    }

    #[test]
    fn summary_for_ten_mile_trip() {
        let s = trip_summary(&trip("a", 1, 10.0), &car(30.0), &PriceConfig::default()).unwrap();
        assert!((s.cost.usd() - 1.2833).abs() < 1e-4);
        assert!((s.co2.kg() - 2.9623).abs() < 1e-4);
        assert!((s.eco_fraction - 0.107).abs() < 1e-12);
        assert!((s.potential_cost_saving.usd() - 0.1373).abs() < 1e-4);
        assert!((s.potential_co2_saving.kg() - 0.3170).abs() < 1e-4);
    }

    #[test]
    fn zero_mile_summary() {
        let s = trip_summary(&trip("z", 1, 0.0), &car(30.0), &PriceConfig::default()).unwrap();
        assert_eq!(s.gallons, 0.0);
        assert_eq!(s.cost, Money::ZERO);
        assert_eq!(s.co2, Emission::ZERO);
        assert_eq!(s.eco_fraction, 0.175);
        assert_eq!(s.potential_cost_saving, Money::ZERO);
    }

    #[test]
    fn co2_override_ignores_mpg() {
        for mpg in [15.0, 30.0, 55.0] {
            let v = VehicleProfile::new(VehicleCategory::Suv, Powertrain::Hev, mpg, Some(300.0)).unwrap();
            let s = trip_summary(&trip("o", 1, 10.0), &v, &PriceConfig::default()).unwrap();
            assert!((s.co2.kg() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bundled_catalog() {
        let cat = VehicleCatalog::default();
        assert_eq!(cat.len(), 13);
        for c in [
            VehicleCategory::SmallCar,
            VehicleCategory::MidsizeCar,
            VehicleCategory::LargeCar,
            VehicleCategory::Suv,
            VehicleCategory::Minivan,
        ] {
            let ice = cat.lookup(VehicleKey { category: c, powertrain: Powertrain::Ice }).unwrap();
            let hev = cat.lookup(VehicleKey { category: c, powertrain: Powertrain::Hev }).unwrap();
            assert!(hev.mpg_combined > ice.mpg_combined, "{c}");
        }
        for c in VehicleCategory::ALL {
            assert!(cat.get(VehicleKey { category: c, powertrain: Powertrain::Ice }).is_some());
        }
        assert!(cat
            .lookup(VehicleKey {
                category: VehicleCategory::SportsCar,
                powertrain: Powertrain::Hev
            })
            .is_err());
        assert!(cat.lookup(VehicleKey::default()).is_ok());
    }

    #[test]
    fn catalog_errors() {
        assert!(VehicleCatalog::parse("nope\n").is_err());
        let dup = format!("{CATALOG_HEADER}\nsuv,ICE,20,\nsuv,ice,21,\n");
        assert!(matches!(VehicleCatalog::parse(&dup), Err(CostError::Catalog { line: 3, .. })));
        let bad = format!("{CATALOG_HEADER}\nsuv,ICE,-3,\n");
        assert!(VehicleCatalog::parse(&bad).is_err());
        let unknown = format!("{CATALOG_HEADER}\nhovercraft,ICE,20,\n");
        assert!(VehicleCatalog::parse(&unknown).is_err());
        let ok = format!("{CATALOG_HEADER}\nsuv,HEV,38,250\n");
        let cat = VehicleCatalog::parse(&ok).unwrap();
        assert_eq!(cat.iter().next().unwrap().co2_g_per_mile, Some(250.0));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[], TimeRange::all()), Totals::default());
        let p = PriceConfig { fuel_usd_per_gal: 1.0, co2_kg_per_gal: 1.0 };
        let a = trip_summary(&trip("a", 10, 30.0), &car(30.0), &p).unwrap();
        let b = trip_summary(&trip("b", 20, 60.0), &car(30.0), &p).unwrap();
        let t = aggregate([&a, &b], TimeRange::all());
        assert_eq!(t.cost, Money::from_usd(3.0).unwrap());
        assert_eq!(t.trip_count, 2);
        assert_eq!(aggregate([&a, &b], TimeRange::between(11, 21)).trip_count, 1);
        assert_eq!(aggregate([&a, &b], TimeRange::between(10, 20)).trip_count, 1);
    }

    #[test]
    fn price_validation() {
        let bad = PriceConfig { fuel_usd_per_gal: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(trip_summary(&trip("a", 1, 1.0), &car(30.0), &bad).is_err());
    }

    proptest! {
        #[test]
        fn eco_fraction_monotone_and_bounded(a in 0.0f64..40.0, b in 0.0f64..40.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (flo, fhi) = (eco_fraction(lo).unwrap(), eco_fraction(hi).unwrap());
            prop_assert!(fhi <= flo);
            prop_assert!((HIGHWAY_ECO_FRACTION..=CITY_ECO_FRACTION).contains(&flo));
        }

        #[test]
        fn cost_and_co2_linear_in_distance(d in 0.1f64..200.0, mpg in 10.0f64..60.0) {
            let v = car(mpg);
            let p = PriceConfig::default();
            let one = trip_summary(&trip("a", 1, d), &v, &p).unwrap();
            let two = trip_summary(&trip("a", 1, 2.0 * d), &v, &p).unwrap();
            prop_assert!((two.gallons - 2.0 * one.gallons).abs() < 1e-9);
            prop_assert!((two.co2.kg() - 2.0 * one.co2.kg()).abs() < 1e-9);
            // fixed-point money rounds to 1e-4 each time
            prop_assert!((two.cost.usd() - 2.0 * one.cost.usd()).abs() <= 1.5e-4);
            let ratio = one.co2.kg() / (one.gallons * p.fuel_usd_per_gal);
            prop_assert!((ratio - p.co2_kg_per_gal / p.fuel_usd_per_gal).abs() < 1e-9);
            prop_assert!(one.potential_cost_saving <= one.cost);
            prop_assert!(one.potential_co2_saving.kg() < one.co2.kg());
        }
    }
}
