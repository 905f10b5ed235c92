//! Seeded synthetic sensor traces with ground-truth trips, used to check the
//! detector end to end.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Activity, GeoPoint, LocationSample, MotionSample, Payload, TraceRecord, TransportMode, Trip,
    METERS_PER_MILE,
};
use crate::trace_io::{serialize_trace, TraceFile};

pub const GENERATOR: &str = "ChaCha8Rng";
const WALK_SPEED_MPS: f64 = 1.4;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid scenario: {0}")]
pub struct ScenarioError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Drive,
    Walk,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSegment {
    pub kind: SegmentKind,
    pub duration_s: f64,
    #[serde(default)]
    pub speed_mps: f64,
    #[serde(default)]
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub segments: Vec<ScenarioSegment>,
    #[serde(default = "default_period")]
    pub sample_period_s: f64,
    #[serde(default)]
    pub gps_noise_sigma_m: f64,
    #[serde(default = "default_confidence")]
    pub motion_confidence: f64,
    #[serde(default = "default_start_ts")]
    pub start_ts: i64,
    #[serde(default = "default_origin")]
    pub origin: GeoPoint,
}

fn default_period() -> f64 {
    1.0
}
fn default_confidence() -> f64 {
    0.9
}
fn default_start_ts() -> i64 {
    1_700_000_000_000
}
fn default_origin() -> GeoPoint {
    GeoPoint::new(42.3601, -71.0589).expect("valid origin")
}

impl Scenario {
    pub fn new(seed: u64, segments: Vec<ScenarioSegment>) -> Self {
        Self {
            seed,
            segments,
            sample_period_s: default_period(),
            gps_noise_sigma_m: 0.0,
            motion_confidence: default_confidence(),
            start_ts: default_start_ts(),
            origin: default_origin(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError(m));
        if !(self.sample_period_s.is_finite() && self.sample_period_s > 0.0) {
            return bad(format!("sample period must be positive, got {}", self.sample_period_s));
        }
        if !(self.gps_noise_sigma_m.is_finite() && self.gps_noise_sigma_m >= 0.0) {
            return bad(format!("noise must be non-negative, got {}", self.gps_noise_sigma_m));
        }
        if !(0.0..=1.0).contains(&self.motion_confidence) {
            return bad(format!("motion confidence outside [0, 1]: {}", self.motion_confidence));
        }
        if self.start_ts <= 0 {
            return bad("start_ts must be positive".into());
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
                return bad(format!("segment {i}: duration must be positive"));
            }
            if !(s.speed_mps.is_finite() && s.speed_mps >= 0.0) {
                return bad(format!("segment {i}: speed must be non-negative"));
            }
            if !s.heading_deg.is_finite() {
                return bad(format!("segment {i}: heading must be finite"));
            }
        }
        Ok(())
    }

    fn speed_of(seg: &ScenarioSegment) -> f64 {
        match seg.kind {
            SegmentKind::Drive => seg.speed_mps,
            SegmentKind::Walk if seg.speed_mps > 0.0 => seg.speed_mps,
            SegmentKind::Walk => WALK_SPEED_MPS,
            SegmentKind::Idle => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTrip {
    pub start_ts: i64,
    pub end_ts: i64,
    pub distance_miles: f64,
    pub mode: TransportMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub generator: String,
    pub seed: u64,
    pub trips: Vec<TruthTrip>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trace: TraceFile,
    pub truth: GroundTruth,
}

impl Simulation {
    /// Canonical trace CSV with the generator and seed in a comment line.
    pub fn trace_csv(&self) -> String {
        serialize_trace(
            &self.trace,
            &[format!("generator={} seed={}", self.truth.generator, self.truth.seed)],
        )
    }

    pub fn truth_json(&self) -> String {
        serde_json::to_string_pretty(&self.truth).expect("truth serializes")
    }
}

struct Leg {
    start_ms: i64,
    end_ms: i64,
    from: GeoPoint,
    seg: ScenarioSegment,
}

/// Runs the scenario. Location and motion samples are emitted every sample
/// period; each run of consecutive drive segments is one ground-truth trip.
pub fn simulate(scenario: &Scenario) -> Result<Simulation, ScenarioError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let sigma = scenario.gps_noise_sigma_m;
    let pos_noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("sigma finite");
    let speed_noise = Normal::new(0.0, (0.05 * sigma).max(f64::MIN_POSITIVE)).expect("finite");

    let mut legs = Vec::with_capacity(scenario.segments.len());
    let mut t_ms = 0i64;
    let mut at = scenario.origin;
    for seg in &scenario.segments {
        let dur_ms = (seg.duration_s * 1000.0).round() as i64;
        let from = at;
        let speed = Scenario::speed_of(seg);
        at = from.destination(seg.heading_deg, speed * dur_ms as f64 / 1000.0);
        legs.push(Leg {
            start_ms: t_ms,
            end_ms: t_ms + dur_ms,
            from,
            seg: *seg,
        });
        t_ms += dur_ms;
    }
    let total_ms = t_ms;
    let period_ms = ((scenario.sample_period_s * 1000.0).round() as i64).max(1);

    let mut records = Vec::new();
    let mut leg_idx = 0;
    // Sample on the period grid, plus one closing sample at the scenario end
    // so the final position is observed.
    let mut times: Vec<i64> = (0..).map(|k| k * period_ms).take_while(|t| *t < total_ms).collect();
    if total_ms > 0 {
        times.push(total_ms);
    }
    for t in times {
        while leg_idx + 1 < legs.len() && legs[leg_idx].end_ms <= t {
            leg_idx += 1;
        }
        let leg = &legs[leg_idx];
        let speed = Scenario::speed_of(&leg.seg);
        let elapsed_s = (t - leg.start_ms) as f64 / 1000.0;
        let true_pos = leg.from.destination(leg.seg.heading_deg, speed * elapsed_s);
        let (pos, reported_speed) = if sigma > 0.0 {
            let p = true_pos.offset_m(pos_noise.sample(&mut rng), pos_noise.sample(&mut rng));
            let s = if speed > 0.0 {
                (speed + speed_noise.sample(&mut rng)).max(0.0)
            } else {
                speed_noise.sample(&mut rng).abs()
            };
            (p, s)
        } else {
            (true_pos, speed)
        };
        let ts = scenario.start_ts + t;
        let loc = LocationSample::new(pos, sigma, Some(reported_speed)).expect("valid sample");
        records.push(TraceRecord::new(ts, Payload::Location(loc)).expect("positive ts"));
        let activity = match leg.seg.kind {
            SegmentKind::Drive => Activity::Automotive,
            SegmentKind::Walk => Activity::Walking,
            SegmentKind::Idle => Activity::Stationary,
        };
        let motion = MotionSample::new(activity, scenario.motion_confidence).expect("validated");
        records.push(TraceRecord::new(ts, Payload::Motion(motion)).expect("positive ts"));
    }

    let mut trips: Vec<TruthTrip> = Vec::new();
    let mut prev_drive = false;
    for leg in &legs {
        let is_drive = leg.seg.kind == SegmentKind::Drive;
        if is_drive {
            let meters = leg.seg.speed_mps * (leg.end_ms - leg.start_ms) as f64 / 1000.0;
            match trips.last_mut() {
                Some(trip) if prev_drive => {
                    trip.end_ts = scenario.start_ts + leg.end_ms;
                    trip.distance_miles += meters / METERS_PER_MILE;
                }
                _ => trips.push(TruthTrip {
                    start_ts: scenario.start_ts + leg.start_ms,
                    end_ts: scenario.start_ts + leg.end_ms,
                    distance_miles: meters / METERS_PER_MILE,
                    mode: TransportMode::Automotive,
                }),
            }
        }
        prev_drive = is_drive;
    }

    Ok(Simulation {
        trace: TraceFile::from_records(records),
        truth: GroundTruth {
            generator: GENERATOR.to_string(),
            seed: scenario.seed,
            trips,
        },
    })
}

/// Random multi-drive day: drives of one or two legs separated by a walk and
/// an idle period longer than `min_gap_s`.
pub fn random_scenario(seed: u64, max_noise_m: f64, min_gap_s: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let mut segments = vec![ScenarioSegment {
        kind: SegmentKind::Idle,
        duration_s: rng.random_range(60.0..300.0),
        speed_mps: 0.0,
        heading_deg: 0.0,
    }];
    let drives = rng.random_range(1..=4);
    for d in 0..drives {
        let legs = rng.random_range(1..=2);
        let mut heading = rng.random_range(0.0..360.0);
        for _ in 0..legs {
            segments.push(ScenarioSegment {
                kind: SegmentKind::Drive,
                duration_s: rng.random_range(240.0..1200.0),
                speed_mps: rng.random_range(8.0..30.0),
                heading_deg: heading,
            });
            heading = (heading + rng.random_range(-90.0..90.0)).rem_euclid(360.0);
        }
        segments.push(ScenarioSegment {
            kind: SegmentKind::Walk,
            duration_s: rng.random_range(30.0..240.0),
            speed_mps: WALK_SPEED_MPS,
            heading_deg: rng.random_range(0.0..360.0),
        });
        if d + 1 < drives {
            segments.push(ScenarioSegment {
                kind: SegmentKind::Idle,
                duration_s: min_gap_s + rng.random_range(60.0..1800.0),
                speed_mps: 0.0,
                heading_deg: 0.0,
            });
        }
    }
    let periods = [1.0, 2.0, 5.0];
    Scenario {
        seed,
        segments,
        sample_period_s: periods[rng.random_range(0..periods.len())],
        gps_noise_sigma_m: rng.random_range(0.0..=max_noise_m),
        motion_confidence: rng.random_range(0.6..0.95),
        start_ts: default_start_ts() + rng.random_range(0..86_400_000),
        origin: GeoPoint::new(rng.random_range(25.0..48.0), rng.random_range(-123.0..-70.0))
            .expect("in range"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEval {
    pub precision: f64,
    pub recall: f64,
    /// `None` when nothing matched.
    pub median_distance_error_fraction: Option<f64>,
    /// Per matched pair, ascending.
    pub distance_errors: Vec<f64>,
    pub matched: usize,
    pub detected: usize,
    pub truth: usize,
    /// Set when there were no detections and precision defaulted to 1.
    pub no_detections: bool,
}

fn overlap_ms(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0)
}

/// Greedy one-to-one matching in time order: each truth trip takes the first
/// unmatched detection whose overlap covers at least `match_overlap` of it.
pub fn evaluate_detection(detected: &[Trip], truth: &[TruthTrip], match_overlap: f64) -> DetectionEval {
    let mut used = vec![false; detected.len()];
    let mut errors = Vec::new();
    for t in truth {
        let span = (t.end_ts - t.start_ts).max(1) as f64;
        let hit = detected.iter().enumerate().find(|(i, d)| {
            !used[*i]
                && overlap_ms((d.start_ts, d.end_ts), (t.start_ts, t.end_ts)) as f64 / span
                    >= match_overlap
        });
        if let Some((i, d)) = hit {
            used[i] = true;
            let err = if t.distance_miles > 0.0 {
                (d.distance_miles - t.distance_miles).abs() / t.distance_miles
            } else {
                d.distance_miles
            };
            errors.push(err);
        }
    }
    let matched = errors.len();
    errors.sort_by(f64::total_cmp);
    let median = match errors.len() {
        0 => None,
        n if n % 2 == 1 => Some(errors[n / 2]),
        n => Some((errors[n / 2 - 1] + errors[n / 2]) / 2.0),
    };
    DetectionEval {
        precision: if detected.is_empty() {
            1.0
        } else {
            matched as f64 / detected.len() as f64
        },
        recall: if truth.is_empty() {
            1.0
        } else {
            matched as f64 / truth.len() as f64
        },
        median_distance_error_fraction: median,
        distance_errors: errors,
        matched,
        detected: detected.len(),
        truth: truth.len(),
        no_detections: detected.is_empty(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TripId;

    fn drive(duration_s: f64, speed: f64) -> ScenarioSegment {
        ScenarioSegment {
            kind: SegmentKind::Drive,
            duration_s,
            speed_mps: speed,
            heading_deg: 45.0,
        }
    }

    fn idle(duration_s: f64) -> ScenarioSegment {
        ScenarioSegment {
            kind: SegmentKind::Idle,
            duration_s,
            speed_mps: 0.0,
            heading_deg: 0.0,
        }
    }

    #[test]
    fn single_drive_truth_distance() {
        let sim = simulate(&Scenario::new(1, vec![drive(600.0, 15.0)])).unwrap();
        assert_eq!(sim.truth.trips.len(), 1);
        // 9000 m / 1609.344 m/mi
        assert!((sim.truth.trips[0].distance_miles - 5.592).abs() < 1e-3);
        assert!((sim.truth.trips[0].distance_miles - 9000.0 / 1609.344).abs() < 1e-12);
        assert_eq!(sim.trace.len(), 1202);
    }

    #[test]
    fn idle_only_has_no_truth_trips() {
        let sim = simulate(&Scenario::new(1, vec![idle(900.0)])).unwrap();
        assert!(sim.truth.trips.is_empty());
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut s = random_scenario(7, 10.0, 300.0);
        s.gps_noise_sigma_m = 8.0;
        let a = simulate(&s).unwrap();
        let b = simulate(&s).unwrap();
        assert_eq!(a.trace_csv(), b.trace_csv());
        assert_eq!(a.truth_json(), b.truth_json());
        s.seed = 8;
        assert_ne!(simulate(&s).unwrap().trace_csv(), a.trace_csv());
        assert!(a.trace_csv().starts_with("# generator=ChaCha8Rng seed=7\n"));
    }

    #[test]
    fn consecutive_drive_legs_form_one_trip() {
        let sim = simulate(&Scenario::new(3, vec![drive(100.0, 10.0), drive(50.0, 20.0), idle(60.0), drive(10.0, 10.0)])).unwrap();
        assert_eq!(sim.truth.trips.len(), 2);
        assert!((sim.truth.trips[0].distance_miles * METERS_PER_MILE - 2000.0).abs() < 1e-9);
        assert_eq!(sim.truth.trips[0].end_ts - sim.truth.trips[0].start_ts, 150_000);
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = Scenario::new(1, vec![drive(0.0, 10.0)]);
        assert!(simulate(&s).is_err());
        s.segments = vec![drive(10.0, 10.0)];
        s.sample_period_s = 0.0;
        assert!(simulate(&s).is_err());
        s.sample_period_s = 1.0;
        s.gps_noise_sigma_m = -1.0;
        assert!(simulate(&s).is_err());
    }

    #[test]
    fn scenario_json_defaults() {
        let s: Scenario = serde_json::from_str(
            r#"{"seed":4,"segments":[{"kind":"drive","duration_s":60,"speed_mps":10,"heading_deg":0}]}"#,
        )
        .unwrap();
        assert_eq!(s.sample_period_s, 1.0);
        assert_eq!(s.gps_noise_sigma_m, 0.0);
    }

    fn det(start: i64, end: i64, miles: f64) -> Trip {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        Trip {
            id: TripId(format!("d{start}")),
            start_ts: start,
            end_ts: end,
            origin: p,
            destination: p,
            distance_miles: miles,
            mode: TransportMode::Automotive,
            deleted: false,
        }
    }

    fn truth(start: i64, end: i64, miles: f64) -> TruthTrip {
        TruthTrip {
            start_ts: start,
            end_ts: end,
            distance_miles: miles,
            mode: TransportMode::Automotive,
        }
    }

    #[test]
    fn evaluation_conventions() {
        let t = vec![truth(0, 100, 2.0), truth(200, 300, 4.0)];
        let d = vec![det(0, 100, 2.0), det(200, 300, 4.0)];
        let e = evaluate_detection(&d, &t, 0.5);
        assert_eq!((e.precision, e.recall), (1.0, 1.0));
        assert_eq!(e.median_distance_error_fraction, Some(0.0));

        let e = evaluate_detection(&[], &t[..1], 0.5);
        assert_eq!(e.recall, 0.0);
        assert_eq!(e.precision, 1.0);
        assert!(e.no_detections);
        assert_eq!(e.median_distance_error_fraction, None);

        // 40% overlap is below the 50% threshold
        let e = evaluate_detection(&[det(60, 160, 2.0)], &t[..1], 0.5);
        assert_eq!(e.matched, 0);
        assert_eq!((e.precision, e.recall), (0.0, 0.0));
        // 50% exactly matches
        let e = evaluate_detection(&[det(50, 160, 2.2)], &t[..1], 0.5);
        assert_eq!(e.matched, 1);
        assert!((e.median_distance_error_fraction.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn one_detection_cannot_match_twice() {
        let t = vec![truth(0, 100, 1.0), truth(100, 200, 1.0)];
        let e = evaluate_detection(&[det(0, 200, 2.0)], &t, 0.5);
        assert_eq!(e.matched, 1);
        assert_eq!(e.recall, 0.5);
    }
}
