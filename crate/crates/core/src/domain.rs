//! Shared vocabulary: geographic points, sensor samples, trips and the
//! unit-carrying quantities (money, emissions) the rest of the crate trades in.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Mean Earth radius in meters (IUGG).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;
/// International mile.
pub const METERS_PER_MILE: f64 = 1609.344;
pub const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("{what} must be finite and non-negative, got {value}")]
    NegativeOrNan { what: &'static str, value: f64 },
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("timestamp must be positive, got {0}")]
    Timestamp(i64),
    #[error("trip end {end} must be after start {start}")]
    TripSpan { start: i64, end: i64 },
}

fn non_negative(what: &'static str, value: f64) -> Result<f64, DomainError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(DomainError::NegativeOrNan { what, value })
    }
}

/// A WGS84 position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = DomainError;
    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, DomainError> {
        if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
            return Err(DomainError::Latitude(lat));
        }
        if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
            return Err(DomainError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Point reached by travelling `distance_m` along a great circle with the
    /// given initial bearing (degrees clockwise from north).
    pub fn destination(&self, bearing_deg: f64, distance_m: f64) -> GeoPoint {
        let delta = distance_m / EARTH_RADIUS_M;
        let theta = bearing_deg.to_radians();
        let phi1 = self.lat.to_radians();
        let lambda1 = self.lon.to_radians();
        let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos())
            .clamp(-1.0, 1.0)
            .asin();
        let lambda2 = lambda1
            + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
        GeoPoint {
            lat: phi2.to_degrees().clamp(-90.0, 90.0),
            lon: wrap_lon(lambda2.to_degrees()),
        }
    }

    /// Shift by a local east/north offset in meters (tangent-plane approximation).
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> GeoPoint {
        let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
        let coslat = self.lat.to_radians().cos().max(1e-9);
        let dlon = (east_m / (EARTH_RADIUS_M * coslat)).to_degrees();
        GeoPoint {
            lat: (self.lat + dlat).clamp(-90.0, 90.0),
            lon: wrap_lon(self.lon + dlon),
        }
    }
}

fn wrap_lon(lon: f64) -> f64 {
    let mut l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l == -180.0 && lon > 0.0 {
        l = 180.0;
    }
    l
}

/// Great-circle distance on a spherical Earth, in miles.
pub fn haversine_miles(a: &GeoPoint, b: &GeoPoint) -> f64 {
    haversine_m(a, b) / METERS_PER_MILE
}

pub fn haversine_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Activity labels reported by the motion coprocessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Automotive,
    Walking,
    Running,
    Cycling,
    Stationary,
    Unknown,
}

impl Activity {
    pub const ALL: [Activity; 6] = [
        Activity::Automotive,
        Activity::Walking,
        Activity::Running,
        Activity::Cycling,
        Activity::Stationary,
        Activity::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Activity::Automotive => "automotive",
            Activity::Walking => "walking",
            Activity::Running => "running",
            Activity::Cycling => "cycling",
            Activity::Stationary => "stationary",
            Activity::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Activity> {
        Activity::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationSample {
    pub point: GeoPoint,
    pub horizontal_accuracy_m: f64,
    /// `None` when the device did not report a speed.
    pub speed_mps: Option<f64>,
}

impl LocationSample {
    pub fn new(
        point: GeoPoint,
        horizontal_accuracy_m: f64,
        speed_mps: Option<f64>,
    ) -> Result<Self, DomainError> {
        non_negative("horizontal accuracy", horizontal_accuracy_m)?;
        if let Some(s) = speed_mps {
            non_negative("speed", s)?;
        }
        Ok(Self {
            point,
            horizontal_accuracy_m,
            speed_mps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub activity: Activity,
    pub confidence: f64,
}

impl MotionSample {
    pub fn new(activity: Activity, confidence: f64) -> Result<Self, DomainError> {
        if !(confidence.is_finite() && (0.0..=1.0).contains(&confidence)) {
            return Err(DomainError::Confidence(confidence));
        }
        Ok(Self {
            activity,
            confidence,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    Location(LocationSample),
    Motion(MotionSample),
}

/// One timestamped sample from the phone sensor stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub ts: i64,
    pub payload: Payload,
}

impl TraceRecord {
    pub fn new(ts: i64, payload: Payload) -> Result<Self, DomainError> {
        if ts <= 0 {
            return Err(DomainError::Timestamp(ts));
        }
        Ok(Self { ts, payload })
    }

    pub fn location(&self) -> Option<&LocationSample> {
        match &self.payload {
            Payload::Location(l) => Some(l),
            Payload::Motion(_) => None,
        }
    }

    pub fn motion(&self) -> Option<&MotionSample> {
        match &self.payload {
            Payload::Motion(m) => Some(m),
            Payload::Location(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    Automotive,
    Walking,
    Cycling,
    Other,
}

impl TransportMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransportMode::Automotive => "automotive",
            TransportMode::Walking => "walking",
            TransportMode::Cycling => "cycling",
            TransportMode::Other => "other",
        }
    }
}

impl From<Activity> for TransportMode {
    fn from(a: Activity) -> Self {
        match a {
            Activity::Automotive => TransportMode::Automotive,
            Activity::Walking | Activity::Running => TransportMode::Walking,
            Activity::Cycling => TransportMode::Cycling,
            Activity::Stationary | Activity::Unknown => TransportMode::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripId(pub String);

impl fmt::Display for TripId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TripId {
    fn from(s: &str) -> Self {
        TripId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub id: TripId,
    pub start_ts: i64,
    pub end_ts: i64,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub distance_miles: f64,
    pub mode: TransportMode,
    #[serde(default)]
    pub deleted: bool,
}

impl Trip {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.start_ts <= 0 {
            return Err(DomainError::Timestamp(self.start_ts));
        }
        if self.end_ts <= self.start_ts {
            return Err(DomainError::TripSpan {
                start: self.start_ts,
                end: self.end_ts,
            });
        }
        non_negative("trip distance", self.distance_miles)?;
        Ok(())
    }

    pub fn duration_ms(&self) -> i64 {
        self.end_ts - self.start_ts
    }
}

const MONEY_SCALE: f64 = 10_000.0;

/// US dollars held in fixed point at 1/10000 of a dollar.
///
/// Sums are exact; rounding to cents happens only in [`Money::cents_string`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_usd(amount: f64) -> Result<Self, DomainError> {
        non_negative("money", amount)?;
        Ok(Money((amount * MONEY_SCALE).round() as i64))
    }

    pub fn from_ten_thousandths(units: i64) -> Result<Self, DomainError> {
        if units < 0 {
            return Err(DomainError::NegativeOrNan {
                what: "money",
                value: units as f64,
            });
        }
        Ok(Money(units))
    }

    pub fn ten_thousandths(&self) -> i64 {
        self.0
    }

    pub fn usd(&self) -> f64 {
        self.0 as f64 / MONEY_SCALE
    }

    /// Display form rounded half-up to cents, e.g. `"1.28"`.
    pub fn cents_string(&self) -> String {
        let cents = (self.0 + 50) / 100;
        format!("{}.{:02}", cents / 100, cents % 100)
    }

    pub fn scaled(&self, factor: f64) -> Money {
        Money((self.0 as f64 * factor).round().max(0.0) as i64)
    }

    pub fn saturating_sub(self, other: Money) -> Money {
        Money((self.0 - other.0).max(0))
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        self.saturating_sub(rhs)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.cents_string())
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.4}", self.usd()))
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let v: f64 = s.parse().map_err(serde::de::Error::custom)?;
        Money::from_usd(v).map_err(serde::de::Error::custom)
    }
}

/// Kilograms of CO₂.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Emission(f64);

impl Emission {
    pub const ZERO: Emission = Emission(0.0);

    pub fn from_kg(kg: f64) -> Result<Self, DomainError> {
        non_negative("co2", kg).map(Emission)
    }

    pub fn kg(&self) -> f64 {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Emission {
        Emission((self.0 * factor).max(0.0))
    }
}

impl TryFrom<f64> for Emission {
    type Error = DomainError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Emission::from_kg(v)
    }
}

impl From<Emission> for f64 {
    fn from(e: Emission) -> f64 {
        e.0
    }
}

impl Add for Emission {
    type Output = Emission;
    fn add(self, rhs: Emission) -> Emission {
        Emission(self.0 + rhs.0)
    }
}

impl Sum for Emission {
    fn sum<I: Iterator<Item = Emission>>(iter: I) -> Emission {
        iter.fold(Emission::ZERO, Add::add)
    }
}

impl fmt::Display for Emission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} kg", self.0)
    }
}
