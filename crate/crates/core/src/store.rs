//! Local append-only journal holding trips, deletions, settings and
//! interaction events. State is always the fold of the journal from empty.
//!
//! Each line is `seq,ts,op,<payload JSON>`:
//!
//! ```text
//! 1,1700000000000,tab_order_set,{"order":"cost_first"}
//! 2,1700000000500,trip_added,{"id":"t2","start_ts":...}
//! 3,1700000000900,trip_deleted,{"id":"t2"}
//! ```

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::TabOrder;
use crate::cost::{trip_summary, CostError, PriceConfig, TripCostSummary, VehicleCatalog, VehicleKey};
use crate::domain::{Trip, TripId, TransportMode};
use crate::goal::study_start_for;
use crate::trace_io::InteractionEvent;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("trip {0} not found")]
    NotFound(TripId),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid entry: {0}")]
    Invalid(String),
    #[error("journal line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("journal i/o: {0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::NotFound(_) => "not_found",
            StoreError::Conflict(_) => "conflict",
            StoreError::Invalid(_) | StoreError::Cost(_) => "invalid_input",
            StoreError::Corrupt { .. } | StoreError::Io(_) => "internal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JournalOp {
    TripAdded,
    TripDeleted,
    VehicleSet,
    EventRecorded,
    TabOrderSet,
}

impl JournalOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            JournalOp::TripAdded => "trip_added",
            JournalOp::TripDeleted => "trip_deleted",
            JournalOp::VehicleSet => "vehicle_set",
            JournalOp::EventRecorded => "event_recorded",
            JournalOp::TabOrderSet => "tab_order_set",
        }
    }

    fn parse(s: &str) -> Option<JournalOp> {
        [
            JournalOp::TripAdded,
            JournalOp::TripDeleted,
            JournalOp::VehicleSet,
            JournalOp::EventRecorded,
            JournalOp::TabOrderSet,
        ]
        .into_iter()
        .find(|op| op.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mutation {
    AddTrip(Trip),
    DeleteTrip(TripId),
    SetVehicle(VehicleKey),
    RecordEvent(InteractionEvent),
    SetTabOrder(TabOrder),
}

#[derive(Serialize, Deserialize)]
struct IdPayload {
    id: TripId,
}

#[derive(Serialize, Deserialize)]
struct OrderPayload {
    order: TabOrder,
}

impl Mutation {
    pub fn op(&self) -> JournalOp {
        match self {
            Mutation::AddTrip(_) => JournalOp::TripAdded,
            Mutation::DeleteTrip(_) => JournalOp::TripDeleted,
            Mutation::SetVehicle(_) => JournalOp::VehicleSet,
            Mutation::RecordEvent(_) => JournalOp::EventRecorded,
            Mutation::SetTabOrder(_) => JournalOp::TabOrderSet,
        }
    }

    fn payload_json(&self) -> String {
        let v = match self {
            Mutation::AddTrip(t) => serde_json::to_string(t),
            Mutation::DeleteTrip(id) => serde_json::to_string(&IdPayload { id: id.clone() }),
            Mutation::SetVehicle(k) => serde_json::to_string(k),
            Mutation::RecordEvent(e) => serde_json::to_string(e),
            Mutation::SetTabOrder(o) => serde_json::to_string(&OrderPayload { order: *o }),
        };
        v.expect("journal payloads serialize")
    }

    fn from_payload(op: JournalOp, json: &str) -> serde_json::Result<Mutation> {
        Ok(match op {
            JournalOp::TripAdded => Mutation::AddTrip(serde_json::from_str(json)?),
            JournalOp::TripDeleted => Mutation::DeleteTrip(serde_json::from_str::<IdPayload>(json)?.id),
            JournalOp::VehicleSet => Mutation::SetVehicle(serde_json::from_str(json)?),
            JournalOp::EventRecorded => Mutation::RecordEvent(serde_json::from_str(json)?),
            JournalOp::TabOrderSet => {
                Mutation::SetTabOrder(serde_json::from_str::<OrderPayload>(json)?.order)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JournalEntry {
    pub seq: u64,
    pub ts: i64,
    pub mutation: Mutation,
}

impl JournalEntry {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{}\n",
            self.seq,
            self.ts,
            self.mutation.op().as_str(),
            self.mutation.payload_json()
        )
    }

    /// Parses one line without its trailing newline.
    pub fn parse_line(line: &str) -> Result<JournalEntry, String> {
        let mut parts = line.splitn(4, ',');
        let seq = parts.next().and_then(|s| s.parse::<u64>().ok()).ok_or("bad seq")?;
        let ts = parts.next().and_then(|s| s.parse::<i64>().ok()).ok_or("bad ts")?;
        let op = parts.next().and_then(JournalOp::parse).ok_or("unknown op")?;
        let payload = parts.next().ok_or("missing payload")?;
        let mutation = Mutation::from_payload(op, payload).map_err(|e| e.to_string())?;
        Ok(JournalEntry { seq, ts, mutation })
    }
}

/// Everything the journal describes, folded from empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeState {
    pub trips: Vec<Trip>,
    pub vehicle: Option<VehicleKey>,
    pub events: Vec<InteractionEvent>,
    pub tab_order: Option<TabOrder>,
    pub last_seq: u64,
}

impl ProbeState {
    fn trip_index(&self, id: &TripId) -> Option<usize> {
        self.trips.iter().position(|t| &t.id == id)
    }

    pub fn trip(&self, id: &TripId) -> Option<&Trip> {
        self.trip_index(id).map(|i| &self.trips[i])
    }

    /// Checks a mutation against the current state without applying it.
    pub fn check(&self, m: &Mutation) -> Result<(), StoreError> {
        match m {
            Mutation::AddTrip(t) => {
                t.validate().map_err(|e| StoreError::Invalid(e.to_string()))?;
                if t.deleted {
                    return Err(StoreError::Invalid("new trip cannot be deleted".into()));
                }
                if self.trip_index(&t.id).is_some() {
                    return Err(StoreError::Conflict(format!("trip {} already exists", t.id)));
                }
            }
            Mutation::DeleteTrip(id) => match self.trip(id) {
                None => return Err(StoreError::NotFound(id.clone())),
                Some(t) if t.deleted => {
                    return Err(StoreError::Conflict(format!("trip {id} already deleted")))
                }
                Some(_) => {}
            },
            Mutation::RecordEvent(e) if e.ts <= 0 => {
                return Err(StoreError::Invalid("event timestamp must be positive".into()))
            }
            Mutation::RecordEvent(_) | Mutation::SetVehicle(_) | Mutation::SetTabOrder(_) => {}
        }
        Ok(())
    }

    fn apply(&mut self, entry: JournalEntry) {
        match entry.mutation {
            Mutation::AddTrip(t) => self.trips.push(t),
            Mutation::DeleteTrip(id) => {
                if let Some(i) = self.trip_index(&id) {
                    self.trips[i].deleted = true;
                }
            }
            Mutation::SetVehicle(k) => self.vehicle = Some(k),
            Mutation::RecordEvent(e) => self.events.push(e),
            Mutation::SetTabOrder(o) => self.tab_order = Some(o),
        }
        self.last_seq = entry.seq;
    }

    pub fn active_trips(&self) -> impl Iterator<Item = &Trip> {
        self.trips.iter().filter(|t| !t.deleted)
    }

    pub fn vehicle_key(&self) -> VehicleKey {
        self.vehicle.unwrap_or_default()
    }

    /// Cost summaries for non-deleted automotive trips, in journal order.
    pub fn summaries(
        &self,
        catalog: &VehicleCatalog,
        prices: &PriceConfig,
    ) -> Result<Vec<TripCostSummary>, CostError> {
        let vehicle = catalog.lookup(self.vehicle_key())?;
        self.active_trips()
            .filter(|t| t.mode == TransportMode::Automotive)
            .map(|t| trip_summary(t, vehicle, prices))
            .collect()
    }

    /// Local midnight of the earliest trip ever added, deleted or not.
    pub fn study_start(&self, utc_offset_minutes: i32) -> Option<i64> {
        self.trips
            .iter()
            .map(|t| t.start_ts)
            .min()
            .map(|ts| study_start_for(ts, utc_offset_minutes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub entries: usize,
    /// Length of the valid prefix in bytes.
    pub valid_bytes: usize,
    /// Bytes dropped after the valid prefix, with the reason.
    pub truncated: Option<(usize, String)>,
}

/// Folds journal bytes into state, stopping at the first torn or invalid line.
pub fn replay(bytes: &[u8]) -> (ProbeState, ReplayReport) {
    let mut state = ProbeState::default();
    let mut offset = 0;
    let mut entries = 0;
    let mut stop: Option<String> = None;
    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|b| *b == b'\n') else {
            stop = Some("torn final line".into());
            break;
        };
        let line_no = entries + 1;
        let raw = &bytes[offset..offset + nl];
        let entry = std::str::from_utf8(raw)
            .map_err(|_| "invalid utf-8".to_string())
            .and_then(JournalEntry::parse_line);
        let entry = match entry {
            Ok(e) if e.seq <= state.last_seq => Err(format!("seq {} not increasing", e.seq)),
            Ok(e) => state.check(&e.mutation).map(|_| e).map_err(|e| e.to_string()),
            Err(e) => Err(e),
        };
        match entry {
            Ok(e) => {
                state.apply(e);
                entries += 1;
                offset += nl + 1;
            }
            Err(reason) => {
                stop = Some(format!("line {line_no}: {reason}"));
                break;
            }
        }
    }
    let report = ReplayReport {
        entries,
        valid_bytes: offset,
        truncated: stop.map(|r| (bytes.len() - offset, r)),
    };
    (state, report)
}

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(1)
    })
}

pub fn fixed_clock(ts: i64) -> Clock {
    Arc::new(move || ts)
}

#[derive(Clone)]
pub struct StoreOptions {
    /// Seed for the one-time carbon/cost tab order draw.
    pub order_seed: u64,
    pub clock: Clock,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            order_seed: 0,
            clock: system_clock(),
        }
    }
}

enum Sink {
    File(File),
    Memory(Vec<u8>),
}

/// Single-writer handle over a journal. Every mutation is validated, written
/// and synced before it touches the in-memory state.
pub struct ProbeStore {
    sink: Sink,
    path: Option<PathBuf>,
    state: ProbeState,
    clock: Clock,
    recovery: ReplayReport,
}

impl ProbeStore {
    /// Opens (or creates) a journal file, recovering the longest valid prefix.
    pub fn open(path: impl AsRef<Path>, opts: StoreOptions) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (state, report) = replay(&bytes);
        if report.truncated.is_some() {
            file.set_len(report.valid_bytes as u64)?;
            file.sync_data()?;
        }
        let mut store = ProbeStore {
            sink: Sink::File(file),
            path: Some(path),
            state,
            clock: opts.clock,
            recovery: report,
        };
        store.ensure_tab_order(opts.order_seed)?;
        Ok(store)
    }

    pub fn in_memory(opts: StoreOptions) -> Self {
        Self::from_journal_bytes(Vec::new(), opts)
    }

    /// In-memory store seeded from existing journal bytes.
    pub fn from_journal_bytes(bytes: Vec<u8>, opts: StoreOptions) -> Self {
        let (state, report) = replay(&bytes);
        let mut bytes = bytes;
        bytes.truncate(report.valid_bytes);
        let mut store = ProbeStore {
            sink: Sink::Memory(bytes),
            path: None,
            state,
            clock: opts.clock,
            recovery: report,
        };
        store
            .ensure_tab_order(opts.order_seed)
            .expect("memory journal cannot fail");
        store
    }

    fn ensure_tab_order(&mut self, seed: u64) -> Result<(), StoreError> {
        if self.state.tab_order.is_none() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let order = if rng.random_bool(0.5) {
                TabOrder::CarbonFirst
            } else {
                TabOrder::CostFirst
            };
            self.append(Mutation::SetTabOrder(order))?;
        }
        Ok(())
    }

    pub fn state(&self) -> &ProbeState {
        &self.state
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn recovery(&self) -> &ReplayReport {
        &self.recovery
    }

    /// Journal bytes of an in-memory store.
    pub fn journal_bytes(&self) -> Option<&[u8]> {
        match &self.sink {
            Sink::Memory(b) => Some(b),
            Sink::File(_) => None,
        }
    }

    /// Validates, durably appends, then applies. Returns the assigned seq.
    pub fn append(&mut self, mutation: Mutation) -> Result<u64, StoreError> {
        self.state.check(&mutation)?;
        let entry = JournalEntry {
            seq: self.state.last_seq + 1,
            ts: (self.clock)(),
            mutation,
        };
        let line = entry.to_line();
        match &mut self.sink {
            Sink::File(f) => {
                f.write_all(line.as_bytes())?;
                f.sync_data()?;
            }
            Sink::Memory(buf) => buf.extend_from_slice(line.as_bytes()),
        }
        let seq = entry.seq;
        self.state.apply(entry);
        Ok(seq)
    }

    /// Adds trips under fresh store-assigned ids (`t<seq>`), ignoring the ids
    /// they arrive with. Ingestion does not deduplicate.
    pub fn ingest_trips(&mut self, trips: Vec<Trip>) -> Result<Vec<TripId>, StoreError> {
        for t in &trips {
            t.validate().map_err(|e| StoreError::Invalid(e.to_string()))?;
        }
        let mut ids = Vec::with_capacity(trips.len());
        for mut t in trips {
            t.id = TripId(format!("t{}", self.state.last_seq + 1));
            t.deleted = false;
            ids.push(t.id.clone());
            self.append(Mutation::AddTrip(t))?;
        }
        Ok(ids)
    }

    pub fn delete_trip(&mut self, id: &TripId) -> Result<u64, StoreError> {
        self.append(Mutation::DeleteTrip(id.clone()))
    }

    /// Records a batch of events; the whole batch is checked before any is written.
    pub fn record_events(&mut self, events: &[InteractionEvent]) -> Result<usize, StoreError> {
        for (i, e) in events.iter().enumerate() {
            if e.ts <= 0 {
                return Err(StoreError::Invalid(format!("event {i}: timestamp must be positive")));
            }
        }
        for e in events {
            self.append(Mutation::RecordEvent(*e))?;
        }
        Ok(events.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{Powertrain, VehicleCategory};
    use crate::domain::GeoPoint;
    use crate::trace_io::UiEvent;

    fn opts() -> StoreOptions {
        StoreOptions {
            order_seed: 3,
            clock: fixed_clock(1_700_000_000_000),
        }
    }

    fn trip(id: &str, start: i64, miles: f64) -> Trip {
        let p = GeoPoint::new(10.0, 20.0).unwrap();
        Trip {
            id: TripId::from(id),
            start_ts: start,
            end_ts: start + 600_000,
            origin: p,
            destination: p,
            distance_miles: miles,
            mode: TransportMode::Automotive,
            deleted: false,
        }
    }

    #[test]
    fn empty_replay() {
        let (state, report) = replay(b"");
        assert_eq!(state, ProbeState::default());
        assert_eq!(report.entries, 0);
        assert!(report.truncated.is_none());
    }

    #[test]
    fn delete_unknown_trip_is_rejected() {
        let mut s = ProbeStore::in_memory(opts());
        let before = s.state().clone();
        let bytes_before = s.journal_bytes().unwrap().to_vec();
        let err = s.delete_trip(&TripId::from("nope")).unwrap_err();
        assert_eq!(err.code(), "not_found");
        assert_eq!(s.state(), &before);
        assert_eq!(s.journal_bytes().unwrap(), &bytes_before[..]);
    }

    #[test]
    fn add_then_delete_restores_aggregates() {
        let mut s = ProbeStore::in_memory(opts());
        let cat = VehicleCatalog::default();
        let prices = PriceConfig::default();
        let empty = s.state().summaries(&cat, &prices).unwrap();
        let ids = s.ingest_trips(vec![trip("x", 1_700_000_100_000, 12.0)]).unwrap();
        assert_eq!(s.state().summaries(&cat, &prices).unwrap().len(), 1);
        s.delete_trip(&ids[0]).unwrap();
        assert_eq!(s.state().summaries(&cat, &prices).unwrap(), empty);
        assert_eq!(s.delete_trip(&ids[0]).unwrap_err().code(), "conflict");
    }

    #[test]
    fn vehicle_last_write_wins() {
        let mut s = ProbeStore::in_memory(opts());
        let suv = VehicleKey { category: VehicleCategory::Suv, powertrain: Powertrain::Hev };
        let van = VehicleKey { category: VehicleCategory::Minivan, powertrain: Powertrain::Ice };
        s.append(Mutation::SetVehicle(suv)).unwrap();
        s.append(Mutation::SetVehicle(van)).unwrap();
        let (state, _) = replay(s.journal_bytes().unwrap());
        assert_eq!(state.vehicle, Some(van));
    }

    #[test]
    fn tab_order_is_drawn_once() {
        let s = ProbeStore::in_memory(opts());
        let order = s.state().tab_order.unwrap();
        let bytes = s.journal_bytes().unwrap().to_vec();
        assert_eq!(bytes.iter().filter(|b| **b == b'\n').count(), 1);
        let reopened = ProbeStore::from_journal_bytes(bytes.clone(), StoreOptions { order_seed: 99, ..opts() });
        assert_eq!(reopened.state().tab_order, Some(order));
        assert_eq!(reopened.journal_bytes().unwrap(), &bytes[..]);
    }

    #[test]
    fn journal_line_format() {
        let e = JournalEntry {
            seq: 4,
            ts: 77,
            mutation: Mutation::RecordEvent(InteractionEvent::new(5, UiEvent::TabCost).unwrap()),
        };
        assert_eq!(e.to_line(), "4,77,event_recorded,{\"ts\":5,\"event\":\"tab:cost\"}\n");
        assert_eq!(JournalEntry::parse_line(e.to_line().trim_end()).unwrap(), e);
        let d = JournalEntry { seq: 5, ts: 78, mutation: Mutation::DeleteTrip(TripId::from("t2")) };
        assert_eq!(d.to_line(), "5,78,trip_deleted,{\"id\":\"t2\"}\n");
    }

    #[test]
    fn torn_tail_recovers_prior_entries() {
        let mut s = ProbeStore::in_memory(opts());
        s.ingest_trips(vec![trip("a", 1_700_000_100_000, 3.0), trip("b", 1_700_000_900_000, 4.0)])
            .unwrap();
        let full = s.journal_bytes().unwrap().to_vec();
        let cut = full.len() - 10;
        let (state, report) = replay(&full[..cut]);
        assert_eq!(state.trips.len(), 1);
        assert_eq!(report.entries, 2);
        assert!(report.truncated.is_some());
    }

    #[test]
    fn invalid_reference_stops_replay() {
        let good = "1,1,tab_order_set,{\"order\":\"cost_first\"}\n";
        let bad = "2,1,trip_deleted,{\"id\":\"ghost\"}\n";
        let (state, report) = replay(format!("{good}{bad}").as_bytes());
        assert_eq!(report.entries, 1);
        assert_eq!(state.tab_order, Some(TabOrder::CostFirst));
        let dup_seq = "1,1,tab_order_set,{\"order\":\"carbon_first\"}\n";
        let (_, report) = replay(format!("{good}{dup_seq}").as_bytes());
        assert_eq!(report.entries, 1);
    }

    #[test]
    fn file_store_reopens_and_truncates_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.journal");
        let ids = {
            let mut s = ProbeStore::open(&path, opts()).unwrap();
            s.ingest_trips(vec![trip("a", 1_700_000_100_000, 3.0)]).unwrap()
        };
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"3,1,trip_del").unwrap();
        drop(f);
        let mut s = ProbeStore::open(&path, opts()).unwrap();
        assert!(s.recovery().truncated.is_some());
        assert_eq!(s.state().trips.len(), 1);
        s.delete_trip(&ids[0]).unwrap();
        drop(s);
        let s = ProbeStore::open(&path, opts()).unwrap();
        assert!(s.recovery().truncated.is_none());
        assert!(s.state().trips[0].deleted);
    }

    #[test]
    fn study_start_includes_deleted_trips() {
        let mut s = ProbeStore::in_memory(opts());
        let ids = s
            .ingest_trips(vec![trip("a", 1_700_010_000_000, 3.0), trip("b", 1_700_200_000_000, 3.0)])
            .unwrap();
        s.delete_trip(&ids[0]).unwrap();
        assert_eq!(s.state().study_start(0), Some(study_start_for(1_700_010_000_000, 0)));
    }
}
