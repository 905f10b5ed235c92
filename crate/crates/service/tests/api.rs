use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use ecoprobe_core::goal::EXCEEDED_MESSAGE;
use ecoprobe_core::simulate::{ScenarioSegment, SegmentKind};
use ecoprobe_core::store::fixed_clock;
use ecoprobe_core::{simulate, GeoPoint, ProbeStore, Scenario, StoreOptions, TransportMode, Trip, TripId};
use ecoprobe_service::{router, App, EngineConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const DAY: i64 = 86_400_000;
/// A UTC midnight.
const START: i64 = 1_700_006_400_000;

fn app_with(store: ProbeStore, cfg: EngineConfig, now: i64) -> Arc<App> {
    App::new(store, cfg, fixed_clock(now))
}

fn fresh(now: i64) -> Arc<App> {
    let store = ProbeStore::in_memory(StoreOptions {
        order_seed: 4,
        clock: fixed_clock(now),
    });
    app_with(store, EngineConfig::default(), now)
}

async fn call(app: &Arc<App>, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = router(app.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get(app: &Arc<App>, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, Method::GET, uri, Body::empty()).await;
    (s, serde_json::from_str(&b).unwrap_or(Value::String(b)))
}

fn drive_trace(seed: u64) -> String {
    let sc = Scenario::new(
        seed,
        vec![
            ScenarioSegment { kind: SegmentKind::Idle, duration_s: 120.0, speed_mps: 0.0, heading_deg: 0.0 },
            ScenarioSegment { kind: SegmentKind::Drive, duration_s: 600.0, speed_mps: 15.0, heading_deg: 70.0 },
            ScenarioSegment { kind: SegmentKind::Idle, duration_s: 120.0, speed_mps: 0.0, heading_deg: 0.0 },
        ],
    );
    simulate(&sc).unwrap().trace_csv()
}

fn trip(start: i64, miles: f64) -> Trip {
    let p = GeoPoint::new(51.501, -0.1416).unwrap();
    Trip {
        id: TripId::from("x"),
        start_ts: start,
        end_ts: start + 900_000,
        origin: p,
        destination: p.offset_m(3000.0, 1000.0),
        distance_miles: miles,
        mode: TransportMode::Automotive,
        deleted: false,
    }
}

#[tokio::test]
async fn empty_store() {
    let app = fresh(START);
    assert_eq!(get(&app, "/trips").await, (StatusCode::OK, serde_json::json!([])));
    let (s, v) = get(&app, "/summary/cost").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["totals"]["cost"], "0.00");
    assert_eq!(v["totals"]["trip_count"], 0);
    assert_eq!(v["goal"]["kind"], "no_goal_yet");
    let (s, csv) = call(&app, Method::GET, "/log/export", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(csv, "ts,event\n");
}

#[tokio::test]
async fn trace_upload_adds_priced_trip() {
    let app = fresh(START);
    let (s, body) = call(&app, Method::POST, "/traces", drive_trace(1)).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let report: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(report["trips_added"], 1);
    let (_, trips) = get(&app, "/trips").await;
    let t = &trips[0];
    assert!(t["cost"].as_str().unwrap().contains('.'));
    assert!(t["co2_kg"].as_f64().unwrap() > 0.0);
    assert!(t.get("origin").is_none());
    // 9000 m at 30 mpg and $3.85: 5.592 mi / 30 * 3.85 ≈ $0.72
    let miles = t["distance_miles"].as_f64().unwrap();
    assert!((miles - 9000.0 / 1609.344 * 1.15).abs() / miles < 0.02, "{miles}");
}

#[tokio::test]
async fn idle_trace_adds_nothing_and_repeat_duplicates() {
    let app = fresh(START);
    let idle = Scenario::new(
        3,
        vec![ScenarioSegment { kind: SegmentKind::Idle, duration_s: 900.0, speed_mps: 0.0, heading_deg: 0.0 }],
    );
    let (_, body) = call(&app, Method::POST, "/traces", simulate(&idle).unwrap().trace_csv()).await;
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["trips_added"], 0);

    let trace = drive_trace(2);
    call(&app, Method::POST, "/traces", trace.clone()).await;
    call(&app, Method::POST, "/traces", trace).await;
    let (_, trips) = get(&app, "/trips").await;
    assert_eq!(trips.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn bad_trace_header_is_invalid_input() {
    let app = fresh(START);
    let (s, body) = call(&app, Method::POST, "/traces", "when,where\n1,2\n").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "invalid_input");
}

#[tokio::test]
async fn delete_semantics() {
    let mut store = ProbeStore::in_memory(StoreOptions { order_seed: 1, clock: fixed_clock(START) });
    let ids = store.ingest_trips(vec![trip(START + 1000, 10.0), trip(START + DAY, 4.0)]).unwrap();
    let app = app_with(store, EngineConfig::default(), START + DAY + 5);

    let (s, body) = call(&app, Method::DELETE, "/trips/nope", Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "not_found");

    let (_, before) = get(&app, "/summary/cost").await;
    assert_eq!(before["totals"]["cost"], "1.80");
    let (s, _) = call(&app, Method::DELETE, &format!("/trips/{}", ids[0]), Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    let (_, after) = get(&app, "/summary/cost").await;
    // 4 mi / 30 mpg * $3.85
    assert_eq!(after["totals"]["cost"], "0.51");
    assert_eq!(after["totals"]["trip_count"], 1);
    let (_, trips) = get(&app, "/trips").await;
    assert_eq!(trips.as_array().unwrap().len(), 1);

    let (s, body) = call(&app, Method::DELETE, &format!("/trips/{}", ids[0]), Body::empty()).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "conflict");
}

#[tokio::test]
async fn vehicle_switching() {
    let mut store = ProbeStore::in_memory(StoreOptions { order_seed: 1, clock: fixed_clock(START) });
    store.ingest_trips(vec![trip(START + 1000, 10.0), trip(START + 2000, 25.0)]).unwrap();
    let app = app_with(store, EngineConfig::default(), START + 10_000);

    let (s, v) = get(&app, "/vehicle").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["category"], "midsize_car");
    assert_eq!(v["powertrain"], "ICE");

    let (s, body) = call(&app, Method::PUT, "/vehicle", r#"{"category":"hovercraft","powertrain":"ICE"}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["code"], "invalid_input");
    let (s, _) = call(&app, Method::PUT, "/vehicle", r#"{"category":"truck","powertrain":"HEV"}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let cost = |v: &Value| v["totals"]["cost"].as_str().unwrap().parse::<f64>().unwrap();
    let (_, ice) = get(&app, "/summary/cost").await;
    let (s, _) = call(&app, Method::PUT, "/vehicle", r#"{"category":"midsize_car","powertrain":"HEV"}"#).await;
    assert_eq!(s, StatusCode::OK);
    let (_, hev) = get(&app, "/summary/cost").await;
    assert!(cost(&hev) < cost(&ice));
    let (_, trips_once) = get(&app, "/trips").await;
    call(&app, Method::PUT, "/vehicle", r#"{"category":"midsize_car","powertrain":"HEV"}"#).await;
    assert_eq!(get(&app, "/trips").await.1, trips_once);
}

#[tokio::test]
async fn goal_banner_on_exceed_fixture() {
    let mut store = ProbeStore::in_memory(StoreOptions { order_seed: 1, clock: fixed_clock(START) });
    store
        .ingest_trips(vec![
            trip(START + 3_600_000, 10.0),
            trip(START + 3 * DAY + 3_600_000, 10.0),
            trip(START + 4 * DAY, 10.0),
        ])
        .unwrap();
    let app = app_with(store, EngineConfig::default(), START + 4 * DAY + 7_200_000);
    let (_, cost) = get(&app, "/summary/cost?window=current").await;
    assert_eq!(cost["goal"]["kind"], "exceeded");
    assert_eq!(cost["goal"]["message"], EXCEEDED_MESSAGE);
    assert_eq!(cost["goal"]["goal"]["cost"], "1.28");
    assert_eq!(cost["goal"]["current"]["cost"], "2.57");
    assert_eq!(cost["totals"]["trip_count"], 2);
    let (_, carbon) = get(&app, "/summary/carbon").await;
    assert_eq!(carbon["totals"]["trip_count"], 3);
    assert_eq!(carbon["goal"]["kind"], "exceeded");
    let (_, all_cost) = get(&app, "/summary/cost?window=all").await;
    assert_eq!(all_cost["totals"]["trip_count"], carbon["totals"]["trip_count"]);

    let (s, body) = call(&app, Method::GET, "/summary/fuel", Body::empty()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
    let (s, _) = call(&app, Method::GET, "/summary/cost?window=week", Body::empty()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn first_window_has_no_goal() {
    let mut store = ProbeStore::in_memory(StoreOptions { order_seed: 1, clock: fixed_clock(START) });
    store.ingest_trips(vec![trip(START + 3_600_000, 10.0)]).unwrap();
    let app = app_with(store, EngineConfig::default(), START + DAY);
    let (_, v) = get(&app, "/summary/cost").await;
    assert_eq!(v["goal"]["kind"], "no_goal_yet");
    assert!(v["goal"]["goal"].is_null());
    assert!(v["goal"]["message"].is_null());
}

#[tokio::test]
async fn events_round_trip_and_validation() {
    let app = fresh(START);
    let body = r#"[{"ts":10,"event":"foreground"},{"ts":20,"event":"tab:cost"},{"ts":35,"event":"background"}]"#;
    let (s, _) = call(&app, Method::POST, "/events", body).await;
    assert_eq!(s, StatusCode::OK);
    let (_, csv) = call(&app, Method::GET, "/log/export", Body::empty()).await;
    assert_eq!(csv, "ts,event\n10,foreground\n20,tab:cost\n35,background\n");

    let bad = r#"[{"ts":40,"event":"tab:cost"},{"ts":50,"event":"tab:fuel"}]"#;
    let (s, body) = call(&app, Method::POST, "/events", bad).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["code"], "invalid_input");
    assert!(v["message"].as_str().unwrap().contains("event 1"), "{v}");
    // Nothing from the rejected batch was recorded.
    let (_, csv) = call(&app, Method::GET, "/log/export", Body::empty()).await;
    assert_eq!(csv.lines().count(), 4);
}

#[tokio::test]
async fn tab_order_is_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("j");
    let opts = |seed| StoreOptions { order_seed: seed, clock: fixed_clock(START) };
    let first = {
        let app = app_with(ProbeStore::open(&path, opts(8)).unwrap(), EngineConfig::default(), START);
        get(&app, "/tabs").await.1
    };
    assert_eq!(first["tabs"][0], "trips");
    let app = app_with(ProbeStore::open(&path, opts(9)).unwrap(), EngineConfig::default(), START);
    assert_eq!(get(&app, "/tabs").await.1, first);
}

#[tokio::test]
async fn export_flag_reveals_coordinates() {
    let mut store = ProbeStore::in_memory(StoreOptions { order_seed: 1, clock: fixed_clock(START) });
    store.ingest_trips(vec![trip(START + 1, 3.0)]).unwrap();
    let cfg = EngineConfig { export_coordinates: true, ..EngineConfig::default() };
    let app = app_with(store, cfg, START + 2);
    let (_, trips) = get(&app, "/trips").await;
    assert_eq!(trips[0]["origin"]["lat"], 51.501);
}

#[tokio::test]
async fn remote_bind_requires_opt_in() {
    let app = fresh(START);
    let addr = "0.0.0.0:0".parse().unwrap();
    let err = ecoprobe_service::serve(app, addr, false).await.unwrap_err();
    assert!(err.to_string().contains("non-loopback"));
}
