//! `ecoprobe`: batch driver for trace ingestion, cost reports, simulation
//! and the study statistics.
//!
//! Exit status is 0 on success, 1 on a domain error and 2 on a usage error.

mod output;

use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecoprobe_core::analytics::{
    compute_dwell, dwell_by_display_position, dwell_csv, paired_t_test, parse_paired_samples,
    parse_survey, survey_t_tests, wilcoxon_signed_rank, wilcoxon_signed_rank_with, DwellReport, TabOrder,
    TestResult, WilcoxonMethod,
};
use ecoprobe_core::cost::{Powertrain, VehicleCategory};
use ecoprobe_core::simulate::{random_scenario, GroundTruth};
use ecoprobe_core::store::{fixed_clock, replay, system_clock, Clock, Mutation};
use ecoprobe_core::trace_io::{parse_interaction_log, parse_trace};
use ecoprobe_core::{
    detect_trips, evaluate_detection, simulate, DetectorConfig, Metric, PathDistance, PriceConfig,
    ProbeState, ProbeStore, Scenario, StoreOptions, TripId, VehicleCatalog, VehicleKey,
};
use ecoprobe_service::views::{self, EngineConfig, WindowSel};
use ecoprobe_service::{ingest_trace, ApiError, App, DEFAULT_PORT};
use output::{opt, render, tag, Format, Table};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "ecoprobe", version, about = "Eco-driving study probe: trips, costs, goals and analysis")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Journal file holding trips, settings and events.
    #[arg(long, global = true, env = "ECOPROBE_STORE", default_value = "ecoprobe.journal")]
    store: PathBuf,
    /// Vehicle catalog CSV (category,powertrain,mpg,co2_g_per_mile). Defaults to the bundled one.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Fuel price in USD per gallon.
    #[arg(long, global = true)]
    fuel_price: Option<f64>,
    /// CO₂ emitted per gallon burned, kg.
    #[arg(long, global = true)]
    co2_per_gal: Option<f64>,
    /// Lowest automotive activity confidence that counts toward driving.
    #[arg(long, global = true)]
    min_auto_confidence: Option<f64>,
    /// Speed (m/s) that counts as moving in a vehicle.
    #[arg(long, global = true)]
    start_speed: Option<f64>,
    /// Time without fast fixes that ends a trip, ms.
    #[arg(long, global = true)]
    end_dwell_ms: Option<i64>,
    /// Shorter trips are dropped, miles.
    #[arg(long, global = true)]
    min_trip_miles: Option<f64>,
    /// Multiplier from straight-leg path length to road distance, at least 1.
    #[arg(long, global = true)]
    winding_factor: Option<f64>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,
    /// Current time in Unix ms; defaults to the system clock.
    #[arg(long, global = true)]
    now: Option<i64>,
    /// Offset from UTC used to find the study's first midnight.
    #[arg(long, global = true, default_value_t = 0, allow_negative_numbers = true)]
    utc_offset_minutes: i32,
    /// Seed for the one-time tab order draw when a store is created.
    #[arg(long, global = true, default_value_t = 0)]
    order_seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Cost,
    Carbon,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cost => Metric::Cost,
            MetricArg::Carbon => Metric::Carbon,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WindowArg {
    All,
    Current,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Auto,
    Exact,
    Normal,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect trips in trace files and add the automotive ones to the store.
    Ingest {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// List stored trips with their cost and CO₂.
    Trips,
    /// Delete a stored trip.
    Delete { id: String },
    /// Show or set the vehicle used for pricing.
    Vehicle {
        category: Option<VehicleCategory>,
        powertrain: Option<Powertrain>,
    },
    /// Running totals and potential savings.
    Report {
        #[arg(value_enum)]
        metric: MetricArg,
        #[arg(long, value_enum, default_value = "all")]
        window: WindowArg,
    },
    /// Goal banner state for the current window.
    Goal {
        #[arg(value_enum)]
        metric: MetricArg,
    },
    /// Generate a trace and its ground truth from a scenario file or a seed.
    Simulate {
        /// Scenario JSON. Without it a random multi-trip day is drawn from --seed.
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace_out: PathBuf,
        #[arg(long)]
        truth_out: PathBuf,
        /// Upper bound on GPS noise for random scenarios, metres.
        #[arg(long, default_value_t = 10.0)]
        max_noise: f64,
        /// Shortest stop between random drives, seconds.
        #[arg(long, default_value_t = 300.0)]
        min_gap: f64,
    },
    /// Score the detector on a trace against its ground truth.
    EvalDetect {
        trace: PathBuf,
        truth: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        match_overlap: f64,
    },
    /// Per-tab dwell time from interaction logs (participant = file stem).
    Dwell {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// CSV `participant,order` with order carbon_first or cost_first; adds a
        /// second- vs third-position comparison.
        #[arg(long)]
        orders: Option<PathBuf>,
    },
    /// Paired tests.
    Stats {
        #[command(subcommand)]
        test: StatsCommand,
    },
    /// Serve the HTTP API over the store.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Permit binding a non-loopback address.
        #[arg(long)]
        allow_remote: bool,
        /// Include trip coordinates in responses.
        #[arg(long)]
        export_coordinates: bool,
    },
}

#[derive(Subcommand, Debug)]
enum StatsCommand {
    /// Wilcoxon signed-rank on a two-column CSV, differences a − b.
    Wilcoxon {
        csv: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        method: MethodArg,
    },
    /// Paired t-test on a two-column CSV with a = pre and b = post.
    Ttest { csv: PathBuf },
    /// Pre/post t-tests per topic and utility item from a survey CSV.
    Survey { csv: PathBuf },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain { code: String, message: String },
}

impl CliError {
    fn domain(code: &str, message: impl ToString) -> Self {
        CliError::Domain {
            code: code.to_string(),
            message: message.to_string(),
        }
    }

    fn invalid(message: impl ToString) -> Self {
        Self::domain("invalid_input", message)
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        CliError::domain(&tag(&e.code), e.message)
    }
}

impl From<ecoprobe_core::StoreError> for CliError {
    fn from(e: ecoprobe_core::StoreError) -> Self {
        CliError::domain(e.code(), e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::domain("io", format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| CliError::domain("io", format!("{}: {e}", path.display())))
}

struct Ctx {
    g: Global,
    cfg: EngineConfig,
    clock: Clock,
}

impl Ctx {
    fn new(g: Global) -> CliResult<Self> {
        let catalog = match &g.catalog {
            Some(p) => VehicleCatalog::parse(&read_text(p)?).map_err(CliError::invalid)?,
            None => VehicleCatalog::default(),
        };
        let mut prices = PriceConfig::default();
        if let Some(v) = g.fuel_price {
            prices.fuel_usd_per_gal = v;
        }
        if let Some(v) = g.co2_per_gal {
            prices.co2_kg_per_gal = v;
        }
        prices.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let mut detector = DetectorConfig::default();
        if let Some(v) = g.min_auto_confidence {
            detector.min_auto_confidence = v;
        }
        if let Some(v) = g.start_speed {
            detector.start_speed_mps = v;
        }
        if let Some(v) = g.end_dwell_ms {
            detector.end_dwell_ms = v;
        }
        if let Some(v) = g.min_trip_miles {
            detector.min_trip_distance_miles = v;
        }
        if let Some(v) = g.winding_factor {
            detector.winding_factor = v;
        }
        detector.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if g.now.is_some_and(|n| n <= 0) {
            return Err(CliError::Usage("--now must be a positive Unix ms timestamp".into()));
        }
        let clock = g.now.map(fixed_clock).unwrap_or_else(system_clock);
        let cfg = EngineConfig {
            catalog,
            prices,
            detector,
            utc_offset_minutes: g.utc_offset_minutes,
            ..EngineConfig::default()
        };
        Ok(Self { g, cfg, clock })
    }

    fn now(&self) -> i64 {
        (self.clock)()
    }

    fn open_store(&self) -> CliResult<ProbeStore> {
        let store = ProbeStore::open(
            &self.g.store,
            StoreOptions {
                order_seed: self.g.order_seed,
                clock: self.clock.clone(),
            },
        )?;
        if let Some((bytes, reason)) = &store.recovery().truncated {
            eprintln!("warning: dropped {bytes} journal bytes ({reason})");
        }
        Ok(store)
    }

    /// Replays the journal without touching it. A missing file is an empty store.
    fn load_state(&self) -> CliResult<ProbeState> {
        match std::fs::read(&self.g.store) {
            Ok(bytes) => {
                let (state, report) = replay(&bytes);
                if let Some((n, reason)) = report.truncated {
                    eprintln!("warning: ignoring {n} trailing journal bytes ({reason})");
                }
                Ok(state)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ProbeState::default()),
            Err(e) => Err(CliError::domain("io", format!("{}: {e}", self.g.store.display()))),
        }
    }

    fn print<T: Serialize>(&self, table: &Table, value: &T) {
        print!("{}", render(self.g.format, table, value));
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Domain { code, message }) => {
            eprintln!("error[{code}]: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx::new(cli.global)?;
    match cli.command {
        Command::Ingest { traces } => ingest(&ctx, &traces),
        Command::Trips => trips(&ctx),
        Command::Delete { id } => {
            let mut store = ctx.open_store()?;
            store.delete_trip(&TripId(id.clone()))?;
            ctx.print(&Table { headers: vec!["deleted"], rows: vec![vec![id.clone()]] }, &serde_json::json!({ "deleted": id }));
            Ok(())
        }
        Command::Vehicle { category, powertrain } => vehicle(&ctx, category, powertrain),
        Command::Report { metric, window } => report(&ctx, metric.into(), window),
        Command::Goal { metric } => goal(&ctx, metric.into()),
        Command::Simulate {
            scenario,
            seed,
            trace_out,
            truth_out,
            max_noise,
            min_gap,
        } => simulate_cmd(&ctx, scenario, seed, &trace_out, &truth_out, max_noise, min_gap),
        Command::EvalDetect {
            trace,
            truth,
            match_overlap,
        } => eval_detect(&ctx, &trace, &truth, match_overlap),
        Command::Dwell { logs, orders } => dwell(&ctx, &logs, orders.as_deref()),
        Command::Stats { test } => stats(&ctx, test),
        Command::Serve {
            port,
            bind,
            allow_remote,
            export_coordinates,
        } => serve(ctx, SocketAddr::new(bind, port), allow_remote, export_coordinates),
    }
}

fn ingest(ctx: &Ctx, traces: &[PathBuf]) -> CliResult {
    let mut store = ctx.open_store()?;
    let mut table = Table::new(&["file", "trips_added", "skipped_lines", "trip_ids"]);
    let mut reports = Vec::new();
    for path in traces {
        let bytes = std::fs::read(path).map_err(|e| CliError::domain("io", format!("{}: {e}", path.display())))?;
        let r = ingest_trace(&mut store, &ctx.cfg, &bytes)
            .map_err(|e| CliError::domain(&tag(&e.code), format!("{}: {}", path.display(), e.message)))?;
        table.row(vec![
            path.display().to_string(),
            r.trips_added.to_string(),
            r.skipped_lines.to_string(),
            r.trip_ids.join(" "),
        ]);
        reports.push(serde_json::json!({ "file": path.display().to_string(), "report": r }));
    }
    ctx.print(&table, &reports);
    Ok(())
}

fn trips(ctx: &Ctx) -> CliResult {
    let state = ctx.load_state()?;
    let list = views::trip_list(&state, &ctx.cfg)?;
    let mut table = Table::new(&[
        "id",
        "start_ts",
        "end_ts",
        "distance_miles",
        "mode",
        "cost",
        "co2_kg",
        "potential_cost_saving",
        "potential_co2_saving_kg",
    ]);
    for t in &list {
        table.row(vec![
            t.id.clone(),
            t.start_ts.to_string(),
            t.end_ts.to_string(),
            format!("{:.3}", t.distance_miles),
            tag(&t.mode),
            opt(t.cost.clone()),
            opt(t.co2_kg.map(|v| format!("{v:.3}"))),
            opt(t.potential_cost_saving.clone()),
            opt(t.potential_co2_saving_kg.map(|v| format!("{v:.3}"))),
        ]);
    }
    ctx.print(&table, &list);
    Ok(())
}

fn vehicle(ctx: &Ctx, category: Option<VehicleCategory>, powertrain: Option<Powertrain>) -> CliResult {
    let view = match (category, powertrain) {
        (None, None) => views::current_vehicle(&ctx.load_state()?, &ctx.cfg)?,
        (Some(category), powertrain) => {
            let key = VehicleKey {
                category,
                powertrain: powertrain.unwrap_or(Powertrain::Ice),
            };
            let profile = ctx.cfg.catalog.lookup(key).map_err(CliError::invalid)?;
            let view = profile.into();
            ctx.open_store()?.append(Mutation::SetVehicle(key))?;
            view
        }
        (None, Some(_)) => return Err(CliError::Usage("a powertrain needs a category".into())),
    };
    let mut table = Table::new(&["category", "powertrain", "mpg", "co2_g_per_mile"]);
    table.row(vec![
        tag(&view.category),
        tag(&view.powertrain),
        view.mpg.to_string(),
        opt(view.co2_g_per_mile),
    ]);
    ctx.print(&table, &view);
    Ok(())
}

fn report(ctx: &Ctx, metric: Metric, window: WindowArg) -> CliResult {
    let window = match window {
        WindowArg::All => WindowSel::All,
        WindowArg::Current => WindowSel::Current,
    };
    let s = views::summary(&ctx.load_state()?, &ctx.cfg, metric, window, ctx.now())?;
    let mut table = Table::new(&[
        "metric",
        "window",
        "trips",
        "cost",
        "co2_kg",
        "potential_cost_saving",
        "potential_co2_saving_kg",
    ]);
    table.row(vec![
        tag(&s.metric),
        tag(&s.window),
        s.totals.trip_count.to_string(),
        s.totals.cost.clone(),
        format!("{:.3}", s.totals.co2_kg),
        s.totals.potential_cost_saving.clone(),
        format!("{:.3}", s.totals.potential_co2_saving_kg),
    ]);
    ctx.print(&table, &s);
    Ok(())
}

fn goal(ctx: &Ctx, metric: Metric) -> CliResult {
    let s = views::summary(&ctx.load_state()?, &ctx.cfg, metric, WindowSel::Current, ctx.now())?;
    let g = &s.goal;
    let mut table = Table::new(&[
        "kind",
        "window",
        "goal_cost",
        "goal_co2_kg",
        "current_cost",
        "current_co2_kg",
        "message",
    ]);
    table.row(vec![
        tag(&g.kind),
        opt(g.window_index),
        opt(g.goal.as_ref().map(|t| t.cost.clone())),
        opt(g.goal.as_ref().map(|t| format!("{:.3}", t.co2_kg))),
        g.current.cost.clone(),
        format!("{:.3}", g.current.co2_kg),
        opt(g.message.clone()),
    ]);
    ctx.print(&table, g);
    Ok(())
}

fn simulate_cmd(
    ctx: &Ctx,
    scenario: Option<PathBuf>,
    seed: Option<u64>,
    trace_out: &Path,
    truth_out: &Path,
    max_noise: f64,
    min_gap: f64,
) -> CliResult {
    let sc = match (scenario, seed) {
        (Some(path), seed) => {
            let mut sc: Scenario = serde_json::from_str(&read_text(&path)?)
                .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            sc
        }
        (None, Some(seed)) => {
            if !(max_noise.is_finite() && max_noise >= 0.0 && min_gap.is_finite() && min_gap >= 0.0) {
                return Err(CliError::Usage("--max-noise and --min-gap must be non-negative".into()));
            }
            random_scenario(seed, max_noise, min_gap)
        }
        (None, None) => return Err(CliError::Usage("give a scenario file or --seed".into())),
    };
    let sim = simulate(&sc).map_err(CliError::invalid)?;
    write_text(trace_out, &sim.trace_csv())?;
    let mut truth = sim.truth_json();
    truth.push('\n');
    write_text(truth_out, &truth)?;
    let mut table = Table::new(&["seed", "records", "truth_trips", "trace", "truth"]);
    table.row(vec![
        sc.seed.to_string(),
        sim.trace.len().to_string(),
        sim.truth.trips.len().to_string(),
        trace_out.display().to_string(),
        truth_out.display().to_string(),
    ]);
    ctx.print(
        &table,
        &serde_json::json!({
            "seed": sc.seed,
            "records": sim.trace.len(),
            "truth_trips": sim.truth.trips.len(),
            "trace": trace_out.display().to_string(),
            "truth": truth_out.display().to_string(),
        }),
    );
    Ok(())
}

fn eval_detect(ctx: &Ctx, trace: &Path, truth: &Path, match_overlap: f64) -> CliResult {
    if !(match_overlap > 0.0 && match_overlap <= 1.0) {
        return Err(CliError::Usage("--match-overlap must be in (0, 1]".into()));
    }
    let parsed = parse_trace(&read_text(trace)?).map_err(|e| CliError::invalid(format!("{}: {e}", trace.display())))?;
    let gt: GroundTruth = serde_json::from_str(&read_text(truth)?)
        .map_err(|e| CliError::invalid(format!("{}: {e}", truth.display())))?;
    let dist = PathDistance {
        winding_factor: ctx.cfg.detector.winding_factor,
    };
    let detected = detect_trips(&parsed.trace, &ctx.cfg.detector, &dist);
    let eval = evaluate_detection(&detected, &gt.trips, match_overlap);
    let mut table = Table::new(&["precision", "recall", "median_distance_error", "matched", "detected", "truth"]);
    table.row(vec![
        format!("{:.4}", eval.precision),
        format!("{:.4}", eval.recall),
        opt(eval.median_distance_error_fraction.map(|v| format!("{v:.4}"))),
        eval.matched.to_string(),
        eval.detected.to_string(),
        eval.truth.to_string(),
    ]);
    ctx.print(&table, &eval);
    Ok(())
}

fn parse_orders(text: &str) -> CliResult<BTreeMap<String, TabOrder>> {
    let mut out = BTreeMap::new();
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("participant,order") {
        return Err(CliError::invalid("orders file needs the header `participant,order`"));
    }
    for (i, line) in lines.enumerate() {
        let (p, o) = line
            .split_once(',')
            .ok_or_else(|| CliError::invalid(format!("orders line {}: expected two fields", i + 2)))?;
        let order: TabOrder = o
            .parse()
            .map_err(|e| CliError::invalid(format!("orders line {}: {e}", i + 2)))?;
        out.insert(p.to_string(), order);
    }
    Ok(out)
}

#[derive(Serialize)]
struct DwellOutput {
    dwell: BTreeMap<String, DwellReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    positions: Option<ecoprobe_core::analytics::PositionPairs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    second_vs_third: Option<TestResult>,
}

fn dwell(ctx: &Ctx, logs: &[PathBuf], orders: Option<&Path>) -> CliResult {
    let mut reports = Vec::new();
    for path in logs {
        let parsed = parse_interaction_log(&read_text(path)?)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        if parsed.skipped > 0 {
            eprintln!("warning: {}: skipped {} malformed lines", path.display(), parsed.skipped);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        reports.push((name, compute_dwell(&parsed.events)));
    }
    let mut out = DwellOutput {
        dwell: reports.iter().cloned().collect(),
        positions: None,
        second_vs_third: None,
    };
    if let Some(path) = orders {
        let pairs = dwell_by_display_position(&reports, &parse_orders(&read_text(path)?)?);
        out.second_vs_third = wilcoxon_signed_rank(&pairs.second_tab_ms, &pairs.third_tab_ms).ok();
        out.positions = Some(pairs);
    }
    match ctx.g.format {
        Format::Json => ctx.print(&Table::new(&[]), &out),
        Format::Csv => print!("{}", dwell_csv(&reports)),
        Format::Table => {
            let mut table = Table::new(&["participant", "tab", "dwell_ms"]);
            for (p, r) in &reports {
                for (tab, ms) in &r.per_tab_ms {
                    table.row(vec![p.clone(), tab.as_str().to_string(), ms.to_string()]);
                }
            }
            print!("{}", table.to_text());
            if let Some(pairs) = &out.positions {
                println!();
                println!("participants: {}  excluded: {}", pairs.participants.len(), pairs.excluded);
                match &out.second_vs_third {
                    Some(r) => println!(
                        "second vs third tab: W+ = {}, p = {:.4} ({}, n = {})",
                        r.statistic, r.p_two_sided, r.method, r.n_effective
                    ),
                    None => println!("second vs third tab: not enough non-zero differences"),
                }
            }
        }
    }
    Ok(())
}

fn test_table(rows: &[(String, &TestResult)]) -> Table {
    let mut table = Table::new(&["test", "statistic", "p_two_sided", "n", "method", "mean_diff", "ci95_low", "ci95_high"]);
    for (name, r) in rows {
        table.row(vec![
            name.clone(),
            format!("{:.4}", r.statistic),
            format!("{:.6}", r.p_two_sided),
            r.n_effective.to_string(),
            r.method.to_string(),
            opt(r.mean_diff.map(|v| format!("{v:.4}"))),
            opt(r.ci95.map(|c| format!("{:.4}", c.0))),
            opt(r.ci95.map(|c| format!("{:.4}", c.1))),
        ]);
    }
    table
}

#[derive(Serialize)]
struct SurveyRow<'a> {
    topic: String,
    item: String,
    pairs: usize,
    result: Option<&'a TestResult>,
    error: Option<&'a String>,
}

fn stats(ctx: &Ctx, test: StatsCommand) -> CliResult {
    match test {
        StatsCommand::Wilcoxon { csv, method } => {
            let (a, b) = parse_paired_samples(&read_text(&csv)?).map_err(CliError::invalid)?;
            let method = match method {
                MethodArg::Auto => WilcoxonMethod::Auto,
                MethodArg::Exact => WilcoxonMethod::Exact,
                MethodArg::Normal => WilcoxonMethod::NormalApprox,
            };
            let r = wilcoxon_signed_rank_with(&a, &b, method).map_err(CliError::invalid)?;
            ctx.print(&test_table(&[("wilcoxon".into(), &r)]), &r);
        }
        StatsCommand::Ttest { csv } => {
            let (pre, post) = parse_paired_samples(&read_text(&csv)?).map_err(CliError::invalid)?;
            let r = paired_t_test(&pre, &post).map_err(CliError::invalid)?;
            ctx.print(&test_table(&[("paired_t".into(), &r)]), &r);
        }
        StatsCommand::Survey { csv } => {
            let responses = parse_survey(&read_text(&csv)?).map_err(CliError::invalid)?;
            let tests = survey_t_tests(&responses);
            let mut table = Table::new(&["topic", "item", "pairs", "t", "p_two_sided", "mean_diff", "note"]);
            for t in &tests {
                let (stat, p, mean, note) = match &t.result {
                    Ok(r) => (
                        format!("{:.4}", r.statistic),
                        format!("{:.6}", r.p_two_sided),
                        opt(r.mean_diff.map(|v| format!("{v:.4}"))),
                        String::new(),
                    ),
                    Err(e) => (String::new(), String::new(), String::new(), e.clone()),
                };
                table.row(vec![tag(&t.topic), tag(&t.item), t.pairs.to_string(), stat, p, mean, note]);
            }
            let rows: Vec<SurveyRow> = tests
                .iter()
                .map(|t| SurveyRow {
                    topic: tag(&t.topic),
                    item: tag(&t.item),
                    pairs: t.pairs,
                    result: t.result.as_ref().ok(),
                    error: t.result.as_ref().err(),
                })
                .collect();
            ctx.print(&table, &rows);
        }
    }
    Ok(())
}

fn serve(ctx: Ctx, addr: SocketAddr, allow_remote: bool, export_coordinates: bool) -> CliResult {
    if !addr.ip().is_loopback() && !allow_remote {
        return Err(CliError::Usage(format!(
            "{addr} is not a loopback address; pass --allow-remote to bind it"
        )));
    }
    let store = ctx.open_store()?;
    let cfg = EngineConfig {
        export_coordinates,
        ..ctx.cfg.clone()
    };
    let app = App::new(store, cfg, ctx.clock.clone());
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::domain("internal", e))?;
    eprintln!("listening on http://{addr}");
    rt.block_on(ecoprobe_service::serve(app, addr, allow_remote))
        .map_err(|e| CliError::domain("internal", e))
}
