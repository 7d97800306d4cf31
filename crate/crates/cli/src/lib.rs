//! Command-line front end: an end-to-end protocol demo, the revocation and
//! key-size experiment grid, and the seal benchmark.
//!
//! Exit codes: 0 success, 1 invariant violation, 2 configuration error.
//! Logs go to standard error; CSV and traces go to files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info, warn};

use urban_abe_core::attrspace::{PolicySpec, Representation, RepresentationKind};
use urban_abe_core::citysim::experiment::{
    parse_representation, run_bench, run_experiment, ExperimentConfig, ExperimentError,
};
use urban_abe_core::citysim::metrics::{write_csv, MetricsRow};
use urban_abe_core::protocol::{trace, CitySystem, ItemRef, ProtocolError, SystemConfig, UserId};
use urban_abe_core::segtree::Interval;

#[derive(Debug, Parser)]
#[command(name = "urban-abe", version, about = "Attribute-based access control for city sensing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Setup, key distribution, seal, produce, consume, revoke and consume
    /// again on a toy city.
    Demo(DemoArgs),
    /// Revocation and key-size measurements over representations × route
    /// lengths; writes one CSV row per cell.
    Experiment(CommonArgs),
    /// Seal time and sealed-key size per device count.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration; defaults to the desk-scale setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = ["basic", "segtree", "pool"])]
    pub rep: Option<String>,
    #[arg(long)]
    pub epsilon: Option<u32>,
    /// Route length in meters.
    #[arg(long = "route-length")]
    pub route_length: Option<f64>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub devices: Option<usize>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Timed seals per device count; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FailInject {
    /// Flip a bit of every device's boot material in transit.
    TamperBoot,
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "fail-inject", value_enum)]
    pub fail_inject: Option<FailInject>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Invariant(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Protocol(p) => CliError::Invariant(p.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Loads the configuration file (or the default) and applies flag overrides.
pub fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    match (&args.rep, args.epsilon) {
        (Some(name), eps) => {
            cfg.representations = vec![parse_representation(name, eps.unwrap_or(3))?];
        }
        (None, Some(eps)) => {
            for r in &mut cfg.representations {
                if r.kind() == RepresentationKind::AttributePool {
                    *r = Representation::pool(eps).map_err(|e| CliError::Config(e.to_string()))?;
                }
            }
        }
        (None, None) => {}
    }
    if let Some(l) = args.route_length {
        cfg.route_lengths_m = vec![l];
    }
    if let Some(u) = args.users {
        cfg.users = u;
    }
    if let Some(d) = args.devices {
        cfg.devices = d;
        cfg.bench_devices = vec![d];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_rows(rows: &[MetricsRow], out: &Path) -> Result<(), CliError> {
    let f = fs::File::create(out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    write_csv(rows, f).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))
}

pub fn cmd_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricsRow>, CliError> {
    info!(
        "experiment: seed {}, {} representations × {} route lengths, {} users",
        cfg.seed,
        cfg.representations.len(),
        cfg.route_lengths_m.len(),
        cfg.users
    );
    let cells = run_experiment(cfg)?;
    for c in &cells {
        info!(
            "{} L={} m: affected {:.2}% ± {:.2}, road attrs {:.2}, key {:.0} B",
            c.representation,
            c.route_length_m,
            c.sweep.summary.mean,
            c.sweep.summary.ci95,
            c.keys.road_attrs_mean,
            c.keys.bytes_mean
        );
    }
    let rows: Vec<MetricsRow> = cells.into_iter().map(|c| c.row).collect();
    write_rows(&rows, out)?;
    info!("wrote {} rows to {}", rows.len(), out.display());
    Ok(rows)
}

pub fn cmd_bench(cfg: &ExperimentConfig, repeats: usize, out: &Path) -> Result<Vec<MetricsRow>, CliError> {
    info!("bench: seed {}, device counts {:?}", cfg.seed, cfg.bench_devices);
    let benches = run_bench(cfg, repeats)?;
    for b in &benches {
        info!(
            "{} devices={}: seal {:.1} ms, {} ASK bytes, mean |γ| {:.2}",
            b.row.representation, b.devices, b.seal_time_ms, b.ask_bytes_total, b.row.gamma_mean
        );
    }
    let rows: Vec<MetricsRow> = benches.into_iter().map(|b| b.row).collect();
    write_rows(&rows, out)?;
    info!("wrote {} rows to {}", rows.len(), out.display());
    Ok(rows)
}

/// What the demo observed, for callers that check it programmatically.
#[derive(Debug, Clone, Default)]
pub struct DemoReport {
    pub steps: Vec<String>,
    pub revoked_consume_bottom: bool,
}

fn spec(streets: &[(u32, u32, u32)], days: (u32, u32)) -> PolicySpec {
    PolicySpec {
        authorized: streets
            .iter()
            .map(|&(s, lo, hi)| (s, Interval::new(lo, hi).expect("static intervals")))
            .collect(),
        validity: Interval::new(days.0, days.1).expect("static interval"),
    }
}

struct Demo {
    sys: CitySystem,
    report: DemoReport,
}

impl Demo {
    fn step(&mut self, line: String) {
        info!("{line}");
        self.report.steps.push(line);
    }

    fn expect_data(&mut self, who: &str, user: UserId, item: ItemRef, sd: &[u8]) -> Result<(), CliError> {
        match self.sys.consume_data(user, item) {
            Ok(got) if got == sd => {
                self.step(format!("consume  {who} <- {item:?}: {:?}", String::from_utf8_lossy(&got)));
                Ok(())
            }
            Ok(_) => Err(CliError::Invariant(format!("{who} recovered wrong data for {item:?}"))),
            Err(e) => Err(CliError::Invariant(format!("{who} could not read {item:?}: {e}"))),
        }
    }

    fn expect_bottom(&mut self, who: &str, user: UserId, item: ItemRef) -> Result<(), CliError> {
        match self.sys.consume_data(user, item) {
            Err(e) if e.is_bottom() => {
                self.step(format!("consume  {who} <- {item:?}: ⊥"));
                Ok(())
            }
            Err(e) => Err(CliError::Invariant(format!("{who} on {item:?}: expected ⊥, got {e}"))),
            Ok(_) => Err(CliError::Invariant(format!("{who} read {item:?} without authorization"))),
        }
    }
}

fn protocol(e: ProtocolError) -> CliError {
    CliError::Invariant(e.to_string())
}

pub fn cmd_demo(seed: u64, fail_inject: Option<FailInject>, trace_out: Option<&Path>) -> Result<DemoReport, CliError> {
    let config = SystemConfig::toy();
    let mut d = Demo {
        sys: CitySystem::new(config, seed).map_err(|e| CliError::Config(e.to_string()))?,
        report: DemoReport::default(),
    };
    let space = d.sys.ttp().space();
    let line = format!(
        "setup    seed {seed}: {} streets, {} road + {} time attributes, {} devices, {} histories at the store",
        d.sys.config().city.streets.len(),
        space.road_attribute_count(),
        space.time_attribute_count(),
        d.sys.device_ids().count(),
        d.sys.css().histories().len()
    );
    d.step(line);

    let alice = d.sys.register_user();
    let bob = d.sys.register_user();
    let carol = d.sys.register_user();
    for (name, u, s) in [
        ("alice", alice, spec(&[(1, 1, 4)], (1, 30))),
        ("bob", bob, spec(&[(1, 1, 2), (5, 1, 4)], (1, 30))),
        ("carol", carol, spec(&[(9, 1, 4)], (1, 30))),
    ] {
        d.sys.distribute_key(u, &s).map_err(protocol)?;
        let stored = d.sys.css().user_components(u).map_or(0, |c| c.len());
        let total = d.sys.user(u).and_then(|x| x.key()).map_or(0, |k| k.attributes().len());
        d.step(format!("key      {name} (user {u}): {total} components, {stored} held by the store"));
    }

    if fail_inject == Some(FailInject::TamperBoot) {
        warn!("fail-inject: tampering with boot material in transit");
        d.sys.fabric_mut().set_tamper(Some(Box::new(|env| {
            if env.kind == "boot" {
                if let Some(b) = env.bytes.last_mut() {
                    *b ^= 0x01;
                }
            }
        })));
    }
    let rep = d.sys.seal_day().map_err(protocol)?;
    d.step(format!("seal     day {}: {} sealed keys", d.sys.today(), rep.sealed.len()));
    if !rep.rejected.is_empty() {
        for (dev, why) in &rep.rejected {
            d.step(format!("boot     device {dev} rejected: {why}"));
        }
        return Err(CliError::Invariant(format!(
            "{} devices rejected boot material",
            rep.rejected.len()
        )));
    }

    let sd1 = b"street 1 segment 1: 14 vehicles/min".to_vec();
    let sd5 = b"street 5 segment 1: 3 vehicles/min".to_vec();
    let item1 = d.sys.produce_data(1, &sd1).map_err(protocol)?;
    let item5 = d.sys.produce_data(5, &sd5).map_err(protocol)?;
    d.step(format!("produce  device 1 -> {item1:?}"));
    d.step(format!("produce  device 5 -> {item5:?}"));

    d.expect_data("alice", alice, item1, &sd1)?;
    d.expect_data("bob", bob, item1, &sd1)?;
    d.expect_data("bob", bob, item5, &sd5)?;
    d.expect_bottom("carol", carol, item1)?;

    let rep = d.sys.revoke_key(bob).map_err(protocol)?;
    let rekeyed = d.sys.css().histories().values().filter(|h| h.len() > 0).count();
    d.step(format!(
        "revoke   bob: {rekeyed} attributes re-versioned, new seal generation for {} devices",
        rep.sealed.len()
    ));

    let sd1b = b"street 1 segment 1: 9 vehicles/min".to_vec();
    let item1b = d.sys.produce_data(1, &sd1b).map_err(protocol)?;
    d.step(format!("produce  device 1 -> {item1b:?}"));
    d.expect_data("alice", alice, item1b, &sd1b)?;
    d.expect_data("alice", alice, item1, &sd1)?;
    d.expect_bottom("bob", bob, item1b)?;
    d.expect_bottom("bob", bob, item1)?;
    d.report.revoked_consume_bottom = true;

    d.sys.css().audit().map_err(protocol)?;
    d.step("audit    store holds no time components and histories are consistent".into());

    if let Some(path) = trace_out {
        fs::write(path, trace::to_jsonl(&d.sys)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        debug!("trace written to {}", path.display());
    }
    Ok(d.report)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Info,
        1 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run(argv: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let verbose = match &cli.command {
        Command::Demo(a) => a.common.verbose,
        Command::Experiment(a) => a.verbose,
        Command::Bench(a) => a.common.verbose,
    };
    init_logging(verbose);
    let result = match &cli.command {
        Command::Demo(a) => cmd_demo(a.common.seed.unwrap_or(1), a.fail_inject, a.common.out.as_deref()).map(|_| ()),
        Command::Experiment(a) => resolve_config(a).and_then(|cfg| {
            let out = a.out.clone().unwrap_or_else(|| "experiment.csv".into());
            cmd_experiment(&cfg, &out).map(|_| ())
        }),
        Command::Bench(a) => resolve_config(&a.common).and_then(|cfg| {
            let out = a.common.out.clone().unwrap_or_else(|| "bench.csv".into());
            cmd_bench(&cfg, a.repeats, &out).map(|_| ())
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
