//! Trip segmentation and transport-mode classification over a sensor trace.
//!
//! A trip opens on the first fast location sample that has automotive motion
//! evidence within [`MOTION_SUPPORT_MS`], and closes once no fast sample has
//! been seen for `end_dwell_ms`. Route length comes from a [`DistanceProvider`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{haversine_m, haversine_miles, GeoPoint, TransportMode, Trip, TripId};
use crate::trace_io::TraceFile;

/// Max distance in time between a fast fix and the automotive motion sample backing it.
pub const MOTION_SUPPORT_MS: i64 = 60_000;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid detector setting {field}: {value}")]
pub struct ConfigError {
    pub field: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub min_auto_confidence: f64,
    pub start_speed_mps: f64,
    pub end_dwell_ms: i64,
    pub min_trip_distance_miles: f64,
    pub winding_factor: f64,
    /// Consecutive route points closer than this multiple of their reported
    /// horizontal accuracy are merged before measuring the path.
    pub leg_accuracy_ratio: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            min_auto_confidence: 0.5,
            start_speed_mps: 4.0,
            end_dwell_ms: 300_000,
            min_trip_distance_miles: 0.25,
            winding_factor: 1.15,
            leg_accuracy_ratio: 10.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, field: &'static str, value: f64| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError { field, value })
            }
        };
        let c = self.min_auto_confidence;
        check((0.0..=1.0).contains(&c), "min_auto_confidence", c)?;
        let s = self.start_speed_mps;
        check(s.is_finite() && s >= 0.0, "start_speed_mps", s)?;
        check(self.end_dwell_ms > 0, "end_dwell_ms", self.end_dwell_ms as f64)?;
        let m = self.min_trip_distance_miles;
        check(m.is_finite() && m >= 0.0, "min_trip_distance_miles", m)?;
        let w = self.winding_factor;
        check(w.is_finite() && w >= 1.0, "winding_factor", w)?;
        let r = self.leg_accuracy_ratio;
        check(r.is_finite() && r >= 0.0, "leg_accuracy_ratio", r)?;
        Ok(())
    }
}

/// Estimates road distance along an ordered list of fixes.
///
/// Implementations must never return less than the chord between the first
/// and last point.
pub trait DistanceProvider {
    fn route_miles(&self, points: &[GeoPoint]) -> f64;
}

/// Sum of great-circle legs scaled by a winding factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDistance {
    pub winding_factor: f64,
}

impl DistanceProvider for PathDistance {
    fn route_miles(&self, points: &[GeoPoint]) -> f64 {
        path_distance(points, self.winding_factor)
    }
}

pub fn path_distance(points: &[GeoPoint], winding_factor: f64) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let legs: f64 = points
        .windows(2)
        .map(|w| haversine_miles(&w[0], &w[1]))
        .sum();
    legs * winding_factor
}

/// A motion sample with its timestamp, as fed to [`classify_mode`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedMotion {
    pub ts: i64,
    pub activity: crate::domain::Activity,
    pub confidence: f64,
}

const TIE_ORDER: [TransportMode; 4] = [
    TransportMode::Automotive,
    TransportMode::Cycling,
    TransportMode::Walking,
    TransportMode::Other,
];

/// Picks the mode with the largest confidence-weighted share of the window's
/// duration. Each sample covers the time until the next one; the last sample
/// covers the mean spacing of the window.
pub fn classify_mode(window: &[TimedMotion]) -> TransportMode {
    if window.is_empty() {
        return TransportMode::Other;
    }
    let mut durations: Vec<f64> = window
        .windows(2)
        .map(|w| (w[1].ts - w[0].ts).max(0) as f64)
        .collect();
    let tail = if durations.is_empty() {
        1.0
    } else {
        durations.iter().sum::<f64>() / durations.len() as f64
    };
    durations.push(tail);
    if durations.iter().all(|d| *d == 0.0) {
        durations.iter_mut().for_each(|d| *d = 1.0);
    }

    let mut weight = [0.0f64; 4];
    for (m, d) in window.iter().zip(&durations) {
        let mode = TransportMode::from(m.activity);
        let slot = TIE_ORDER.iter().position(|t| *t == mode).unwrap_or(3);
        weight[slot] += m.confidence * d;
    }
    let mut best = 0;
    for i in 1..4 {
        if weight[i] > weight[best] {
            best = i;
        }
    }
    TIE_ORDER[best]
}

#[derive(Debug, Clone, Copy)]
struct Fix {
    ts: i64,
    point: GeoPoint,
    accuracy_m: f64,
    speed_mps: f64,
}

/// A raw segment before distance measurement and the minimum-distance filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start_ts: i64,
    pub end_ts: i64,
}

fn fixes(trace: &TraceFile) -> Vec<Fix> {
    let raw: Vec<(i64, crate::domain::LocationSample)> = trace
        .records
        .iter()
        .filter_map(|r| r.location().map(|l| (r.ts, *l)))
        .collect();
    let chord_speed = |i: usize, j: usize| -> f64 {
        let dt = (raw[j].0 - raw[i].0) as f64 / 1000.0;
        if dt > 0.0 {
            haversine_m(&raw[i].1.point, &raw[j].1.point) / dt
        } else {
            0.0
        }
    };
    (0..raw.len())
        .map(|i| {
            let (ts, loc) = raw[i];
            let speed_mps = loc.speed_mps.unwrap_or_else(|| {
                if i > 0 {
                    chord_speed(i - 1, i)
                } else if raw.len() > 1 {
                    chord_speed(0, 1)
                } else {
                    0.0
                }
            });
            Fix {
                ts,
                point: loc.point,
                accuracy_m: loc.horizontal_accuracy_m,
                speed_mps,
            }
        })
        .collect()
}

fn motions(trace: &TraceFile) -> Vec<TimedMotion> {
    trace
        .records
        .iter()
        .filter_map(|r| {
            r.motion().map(|m| TimedMotion {
                ts: r.ts,
                activity: m.activity,
                confidence: m.confidence,
            })
        })
        .collect()
}

fn motion_range(motion: &[TimedMotion], from: i64, to: i64) -> &[TimedMotion] {
    let lo = motion.partition_point(|m| m.ts < from);
    let hi = motion.partition_point(|m| m.ts <= to);
    &motion[lo..hi.max(lo)]
}

fn segment_fixes(fixes: &[Fix], motion: &[TimedMotion], cfg: &DetectorConfig) -> Vec<(usize, usize)> {
    let fast = |f: &Fix| f.speed_mps >= cfg.start_speed_mps;
    let supported = |f: &Fix| {
        motion_range(motion, f.ts - MOTION_SUPPORT_MS, f.ts + MOTION_SUPPORT_MS)
            .iter()
            .any(|m| {
                m.activity == crate::domain::Activity::Automotive
                    && m.confidence >= cfg.min_auto_confidence
            })
    };

    let mut out = Vec::new();
    let mut i = 0;
    while i < fixes.len() {
        let Some(start) = (i..fixes.len()).find(|&k| fast(&fixes[k]) && supported(&fixes[k])) else {
            break;
        };
        let mut last = start;
        let mut j = start + 1;
        while j < fixes.len() {
            if fast(&fixes[j]) {
                if fixes[j].ts - fixes[last].ts > cfg.end_dwell_ms {
                    break;
                }
                last = j;
            }
            j += 1;
        }
        out.push((start, last));
        i = last + 1;
    }
    out
}

/// Segments the trace without measuring distance or filtering short trips.
pub fn candidate_segments(trace: &TraceFile, cfg: &DetectorConfig) -> Vec<Segment> {
    let fixes = fixes(trace);
    segment_fixes(&fixes, &motions(trace), cfg)
        .into_iter()
        .map(|(s, e)| Segment {
            start_ts: fixes[s].ts,
            end_ts: fixes[e].ts,
        })
        .collect()
}

/// Drops fixes that sit inside the accuracy envelope of the last kept fix,
/// so position jitter does not inflate path length. Endpoints are kept.
fn thin_route(fixes: &[Fix], ratio: f64) -> Vec<GeoPoint> {
    let (Some(first), Some(last)) = (fixes.first(), fixes.last()) else {
        return Vec::new();
    };
    if fixes.len() == 1 {
        return vec![first.point];
    }
    let too_close = |a: &Fix, b: &Fix| {
        haversine_m(&a.point, &b.point) < ratio * a.accuracy_m.max(b.accuracy_m)
    };
    let mut kept = vec![*first];
    for f in &fixes[1..fixes.len() - 1] {
        if !too_close(kept.last().unwrap(), f) {
            kept.push(*f);
        }
    }
    if kept.len() > 1 && too_close(kept.last().unwrap(), last) {
        kept.pop();
    }
    kept.push(*last);
    kept.into_iter().map(|f| f.point).collect()
}

pub fn detect_trips(
    trace: &TraceFile,
    cfg: &DetectorConfig,
    dist: &dyn DistanceProvider,
) -> Vec<Trip> {
    let fixes = fixes(trace);
    let motion = motions(trace);
    let mut trips = Vec::new();
    for (s, e) in segment_fixes(&fixes, &motion, cfg) {
        let (start_ts, end_ts) = (fixes[s].ts, fixes[e].ts);
        if end_ts <= start_ts {
            continue;
        }
        let route = thin_route(&fixes[s..=e], cfg.leg_accuracy_ratio);
        let origin = fixes[s].point;
        let destination = fixes[e].point;
        let distance_miles = dist
            .route_miles(&route)
            .max(haversine_miles(&origin, &destination));
        if distance_miles < cfg.min_trip_distance_miles {
            continue;
        }
        let mut window = motion_range(&motion, start_ts, end_ts);
        if window.is_empty() {
            window = motion_range(&motion, start_ts - MOTION_SUPPORT_MS, end_ts + MOTION_SUPPORT_MS);
        }
        trips.push(Trip {
            id: TripId(format!("trip-{start_ts}")),
            start_ts,
            end_ts,
            origin,
            destination,
            distance_miles,
            mode: classify_mode(window),
            deleted: false,
        });
    }
    trips
}
