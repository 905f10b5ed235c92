use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::trace_io::{InteractionEvent, UiEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tab {
    Trips,
    Carbon,
    Cost,
    Info,
    Log,
}

impl Tab {
    pub const ALL: [Tab; 5] = [Tab::Trips, Tab::Carbon, Tab::Cost, Tab::Info, Tab::Log];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tab::Trips => "trips",
            Tab::Carbon => "carbon",
            Tab::Cost => "cost",
            Tab::Info => "info",
            Tab::Log => "log",
        }
    }

    fn from_event(e: UiEvent) -> Option<Tab> {
        match e {
            UiEvent::TabTrips => Some(Tab::Trips),
            UiEvent::TabCarbon => Some(Tab::Carbon),
            UiEvent::TabCost => Some(Tab::Cost),
            UiEvent::TabInfo => Some(Tab::Info),
            UiEvent::TabLog => Some(Tab::Log),
            UiEvent::Foreground | UiEvent::Background => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DwellReport {
    pub per_tab_ms: BTreeMap<Tab, i64>,
    pub session_count: usize,
    pub total_foreground_ms: i64,
}

impl Default for DwellReport {
    fn default() -> Self {
        Self {
            per_tab_ms: Tab::ALL.iter().map(|t| (*t, 0)).collect(),
            session_count: 0,
            total_foreground_ms: 0,
        }
    }
}

impl DwellReport {
    pub fn dwell_ms(&self, tab: Tab) -> i64 {
        self.per_tab_ms.get(&tab).copied().unwrap_or(0)
    }

    pub fn total_tab_ms(&self) -> i64 {
        self.per_tab_ms.values().sum()
    }
}

struct OpenSession {
    started: i64,
    focus: Tab,
    focus_since: i64,
}

/// Sessionizes an ordered interaction log into per-tab dwell time.
///
/// A session opens at `foreground` with focus on the trips tab. Focus moves on
/// each tab event; the session closes at `background` or at a repeated
/// `foreground`. Events outside a session are ignored, and a session still
/// open at the end of the log contributes no time past its last event.
pub fn compute_dwell(events: &[InteractionEvent]) -> DwellReport {
    let mut report = DwellReport::default();
    let mut open: Option<OpenSession> = None;

    let close = |s: OpenSession, at: i64, report: &mut DwellReport| {
        *report.per_tab_ms.entry(s.focus).or_default() += (at - s.focus_since).max(0);
        report.total_foreground_ms += (at - s.started).max(0);
    };

    for e in events {
        match e.event {
            UiEvent::Foreground => {
                if let Some(s) = open.take() {
                    close(s, e.ts, &mut report);
                }
                report.session_count += 1;
                open = Some(OpenSession {
                    started: e.ts,
                    focus: Tab::Trips,
                    focus_since: e.ts,
                });
            }
            UiEvent::Background => {
                if let Some(s) = open.take() {
                    close(s, e.ts, &mut report);
                }
            }
            other => {
                let tab = Tab::from_event(other).expect("tab event");
                if let Some(s) = open.as_mut() {
                    *report.per_tab_ms.entry(s.focus).or_default() += (e.ts - s.focus_since).max(0);
                    s.focus = tab;
                    s.focus_since = e.ts;
                }
            }
        }
    }
    if let Some(s) = open {
        // credit the focus interval up to the final event, nothing beyond
        let last = events.last().map(|e| e.ts).unwrap_or(s.focus_since);
        close(s, last, &mut report);
    }
    report
}

/// Which of the two randomized metric tabs was shown second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabOrder {
    CarbonFirst,
    CostFirst,
}

impl TabOrder {
    /// Full tab strip: trips, the two metric tabs in order, info, log.
    pub fn tabs(&self) -> [Tab; 5] {
        match self {
            TabOrder::CarbonFirst => [Tab::Trips, Tab::Carbon, Tab::Cost, Tab::Info, Tab::Log],
            TabOrder::CostFirst => [Tab::Trips, Tab::Cost, Tab::Carbon, Tab::Info, Tab::Log],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TabOrder::CarbonFirst => "carbon_first",
            TabOrder::CostFirst => "cost_first",
        }
    }
}

impl std::str::FromStr for TabOrder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "carbon_first" => Ok(TabOrder::CarbonFirst),
            "cost_first" => Ok(TabOrder::CostFirst),
            _ => Err(format!("unknown tab order `{s}`")),
        }
    }
}

/// Carbon/cost dwell regrouped by display position (second vs third tab).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionPairs {
    pub participants: Vec<String>,
    pub second_tab_ms: Vec<f64>,
    pub third_tab_ms: Vec<f64>,
    pub excluded: usize,
}

pub fn dwell_by_display_position(
    reports: &[(String, DwellReport)],
    orders: &BTreeMap<String, TabOrder>,
) -> PositionPairs {
    let mut out = PositionPairs::default();
    for (participant, report) in reports {
        let Some(order) = orders.get(participant) else {
            out.excluded += 1;
            continue;
        };
        let [_, second, third, _, _] = order.tabs();
        out.participants.push(participant.clone());
        out.second_tab_ms.push(report.dwell_ms(second) as f64);
        out.third_tab_ms.push(report.dwell_ms(third) as f64);
    }
    out
}

/// `participant,tab,dwell_ms` rows, one per tab per participant.
pub fn dwell_csv(reports: &[(String, DwellReport)]) -> String {
    let mut out = String::from("participant,tab,dwell_ms\n");
    for (p, r) in reports {
        for tab in Tab::ALL {
            let _ = writeln!(out, "{p},{},{}", tab.as_str(), r.dwell_ms(tab));
        }
    }
    out
}
