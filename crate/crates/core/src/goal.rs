//! Fixed, non-sliding goal windows. Each window's totals become the target for
//! the window after it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{Totals, TripCostSummary};
use crate::domain::MS_PER_DAY;

pub const DEFAULT_WINDOW_DAYS: u32 = 3;

/// Shown when the running total of the current window passes the previous one.
pub const EXCEEDED_MESSAGE: &str =
    "You drove more than last period, try again when the current period resets.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoalError {
    #[error("trip {trip_id} starts at {ts}, before study start {study_start}")]
    TripBeforeStart {
        trip_id: String,
        ts: i64,
        study_start: i64,
    },
    #[error("now ({now}) is before study start ({study_start})")]
    NowBeforeStart { now: i64, study_start: i64 },
    #[error("window length must be at least one day")]
    WindowLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cost,
    Carbon,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cost" => Ok(Metric::Cost),
            "carbon" | "co2" => Ok(Metric::Carbon),
            _ => Err(format!("unknown metric `{s}` (expected cost or carbon)")),
        }
    }
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Cost => "cost",
            Metric::Carbon => "carbon",
        }
    }

    /// `a > b` on this metric.
    fn exceeds(&self, a: &Totals, b: &Totals) -> bool {
        match self {
            Metric::Cost => a.cost > b.cost,
            Metric::Carbon => a.co2.kg() > b.co2.kg(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalWindow {
    pub index: usize,
    pub start_ts: i64,
    /// Exclusive.
    pub end_ts: i64,
    pub totals: Totals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    NoGoalYet,
    OnTrack,
    Exceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalStatus {
    pub kind: GoalKind,
    pub goal: Option<Totals>,
    pub current: Totals,
    pub message: Option<String>,
}

/// Midnight (at the given UTC offset) of the day containing `ts`.
pub fn study_start_for(first_trip_ts: i64, utc_offset_minutes: i32) -> i64 {
    let offset = utc_offset_minutes as i64 * 60_000;
    (first_trip_ts + offset).div_euclid(MS_PER_DAY) * MS_PER_DAY - offset
}

fn window_len_ms(days: u32) -> Result<i64, GoalError> {
    if days == 0 {
        return Err(GoalError::WindowLength);
    }
    Ok(days as i64 * MS_PER_DAY)
}

/// Buckets trip summaries into consecutive windows from `study_start_ts`.
///
/// Windows are emitted through the one containing `max(now, last trip)`, so
/// trailing empty windows appear with zero totals.
pub fn assign_windows(
    summaries: &[TripCostSummary],
    study_start_ts: i64,
    window_len_days: u32,
    now_ts: i64,
) -> Result<Vec<GoalWindow>, GoalError> {
    let len = window_len_ms(window_len_days)?;
    if let Some(s) = summaries.iter().find(|s| s.start_ts < study_start_ts) {
        return Err(GoalError::TripBeforeStart {
            trip_id: s.trip_id.to_string(),
            ts: s.start_ts,
            study_start: study_start_ts,
        });
    }
    let horizon = summaries
        .iter()
        .map(|s| s.start_ts)
        .chain(std::iter::once(now_ts))
        .max()
        .unwrap_or(now_ts);
    let count = ((horizon - study_start_ts).max(0) / len) as usize + 1;
    let mut windows: Vec<GoalWindow> = (0..count)
        .map(|k| GoalWindow {
            index: k,
            start_ts: study_start_ts + k as i64 * len,
            end_ts: study_start_ts + (k as i64 + 1) * len,
            totals: Totals::default(),
        })
        .collect();
    for s in summaries {
        let k = ((s.start_ts - study_start_ts) / len) as usize;
        windows[k].totals.add(s);
    }
    Ok(windows)
}

/// Compares the running total of the window containing `now_ts` against the
/// previous window's total. Comparison is strict.
pub fn goal_status(windows: &[GoalWindow], metric: Metric, now_ts: i64) -> Result<GoalStatus, GoalError> {
    let Some(first) = windows.first() else {
        return Ok(GoalStatus {
            kind: GoalKind::NoGoalYet,
            goal: None,
            current: Totals::default(),
            message: None,
        });
    };
    if now_ts < first.start_ts {
        return Err(GoalError::NowBeforeStart {
            now: now_ts,
            study_start: first.start_ts,
        });
    }
    let len = first.end_ts - first.start_ts;
    let k = ((now_ts - first.start_ts) / len) as usize;
    let current = windows.get(k).map(|w| w.totals).unwrap_or_default();
    if k == 0 {
        return Ok(GoalStatus {
            kind: GoalKind::NoGoalYet,
            goal: None,
            current,
            message: None,
        });
    }
    let goal = windows.get(k - 1).map(|w| w.totals).unwrap_or_default();
    let exceeded = metric.exceeds(&current, &goal);
    Ok(GoalStatus {
        kind: if exceeded { GoalKind::Exceeded } else { GoalKind::OnTrack },
        goal: Some(goal),
        current,
        message: exceeded.then(|| EXCEEDED_MESSAGE.to_string()),
    })
}
