//! Experiment drivers: user populations, the counterfactual revocation
//! sweep, key and label size accounting, and seal timing.
//!
//! Every random choice comes from a sub-stream derived from the run seed and
//! a purpose label, so a population depends on `(seed, route length)` only
//! and is shared by all representations measured on it.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attrspace::{
    affected_users, AttrSpaceError, AttributePool, AttributeSpace, PolicySpec, Representation,
    RepresentationKind, TimeConfig, UserPolicy,
};
use crate::kpabe::{self, AttributeId, SecurityLevel};
use crate::protocol::{CitySystem, ProtocolError, SealReport, SystemConfig};
use crate::segtree::Interval;

use super::city::{generate_grid_city, load_city, CityError, CityModel, DevicePlacement, GridSpec};
use super::metrics::MetricsRow;
use super::route::{RoadGraph, RouteError, RouteSpec};
use super::stats::{mean, mean_ci95, MeanCi};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    City(#[from] CityError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    AttrSpace(#[from] AttrSpaceError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CitySource {
    Grid(GridSpec),
    File { path: PathBuf },
}

impl CitySource {
    pub fn load(&self) -> Result<CityModel, CityError> {
        match self {
            CitySource::Grid(g) => generate_grid_city(g),
            CitySource::File { path } => load_city(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub city: CitySource,
    pub representations: Vec<Representation>,
    pub route_lengths_m: Vec<f64>,
    pub users: usize,
    pub subscription_days: u32,
    pub lifetime_days: u32,
    /// Devices used for label statistics in sweep rows.
    pub devices: usize,
    /// Device counts measured by the seal benchmark.
    pub bench_devices: Vec<usize>,
    pub security_bits: u32,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    /// Desk scale: 12×12-block grid, three route lengths, 100 users with
    /// 365-day subscriptions over a 5-year lifetime.
    fn default() -> Self {
        ExperimentConfig {
            city: CitySource::Grid(GridSpec::default()),
            representations: vec![
                Representation::basic(),
                Representation::segment_tree(),
                Representation::pool(3).expect("positive epsilon"),
            ],
            route_lengths_m: vec![500.0, 1000.0, 2000.0],
            users: 100,
            subscription_days: 365,
            lifetime_days: 1825,
            devices: 20,
            bench_devices: vec![10, 50, 100],
            security_bits: SecurityLevel::BITS_80.bits(),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    /// Pool with ε=5, 300 users, 100-year lifetime, longest route.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            representations: vec![Representation::pool(5).expect("positive epsilon")],
            route_lengths_m: vec![2000.0],
            users: 300,
            lifetime_days: 36500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.representations.is_empty() {
            return bad("no representations");
        }
        if self.route_lengths_m.is_empty() || self.route_lengths_m.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("route lengths must be positive");
        }
        if self.users == 0 {
            return bad("users must be positive");
        }
        if self.subscription_days == 0 || self.subscription_days > self.lifetime_days {
            return bad("subscription_days must be in [1, lifetime_days]");
        }
        TimeConfig::new(self.lifetime_days)?;
        SecurityLevel::new(self.security_bits).map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Independent random stream for `purpose` under `seed`.
pub fn sub_rng(seed: u64, purpose: &str, salt: u64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"urban-abe/sub-rng/v1");
    h.update(seed.to_be_bytes());
    h.update((purpose.len() as u64).to_be_bytes());
    h.update(purpose.as_bytes());
    h.update(salt.to_be_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub routes: Vec<RouteSpec>,
    pub specs: Vec<PolicySpec>,
}

/// One route of length `route_length` per user, authorized for a
/// `subscription_days` window starting on a uniform day of the lifetime.
pub fn generate_population(
    graph: &RoadGraph,
    route_length: f64,
    users: usize,
    subscription_days: u32,
    lifetime_days: u32,
    rng: &mut impl Rng,
) -> Result<Population, ExperimentError> {
    if subscription_days == 0 || subscription_days > lifetime_days {
        return Err(ExperimentError::Config("subscription_days must be in [1, lifetime_days]".into()));
    }
    let mut routes = Vec::with_capacity(users);
    let mut specs = Vec::with_capacity(users);
    for _ in 0..users {
        let route = graph.sample_route(route_length, rng)?;
        let start = rng.gen_range(1..=lifetime_days - subscription_days + 1);
        let validity = Interval::new(start, start + subscription_days - 1).expect("start <= end");
        specs.push(route.to_policy_spec(validity));
        routes.push(route);
    }
    Ok(Population { routes, specs })
}

#[derive(Debug, Clone)]
pub struct IssuedPopulation {
    pub policies: Vec<UserPolicy>,
    /// `μ` per user: the road attributes of the key.
    pub road_sets: Vec<BTreeSet<AttributeId>>,
}

/// Issues keys in order against one shared pool, as the TTP would.
pub fn issue_population(space: &AttributeSpace, specs: &[PolicySpec]) -> Result<IssuedPopulation, ExperimentError> {
    let mut pool = AttributePool::new();
    let mut policies = Vec::with_capacity(specs.len());
    let mut road_sets = Vec::with_capacity(specs.len());
    for s in specs {
        let p = space.policy_for_user(s, &mut pool)?;
        road_sets.push(space.road_attributes(&p.road));
        policies.push(p);
    }
    Ok(IssuedPopulation { policies, road_sets })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Other users affected when user `i` alone is revoked.
    pub affected: Vec<BTreeSet<usize>>,
    /// Per-trial percentage of the remaining users affected.
    pub affected_pct: Vec<f64>,
    pub summary: MeanCi,
}

/// Revokes each user in turn against the full population. Trials are
/// independent, so they run in parallel on shared read-only road sets.
pub fn revocation_sweep(road_sets: &[BTreeSet<AttributeId>]) -> SweepResult {
    let n = road_sets.len();
    let affected: Vec<BTreeSet<usize>> = (0..n)
        .into_par_iter()
        .map(|i| affected_users(i, road_sets))
        .collect();
    let affected_pct: Vec<f64> = affected
        .iter()
        .map(|a| if n > 1 { 100.0 * a.len() as f64 / (n - 1) as f64 } else { 0.0 })
        .collect();
    let summary = mean_ci95(&affected_pct);
    SweepResult {
        affected,
        affected_pct,
        summary,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeySizes {
    pub road_attrs_mean: f64,
    pub time_attrs_mean: f64,
    pub bytes_mean: f64,
    /// Share of the encoded key taken by the road subtree and its components.
    pub road_bytes_mean: f64,
    /// Share taken by the time subtree and its components.
    pub time_bytes_mean: f64,
}

fn subtree_bytes(p: &kpabe::AccessPolicy) -> f64 {
    (kpabe::policy_encoded_len(p) + p.leaf_count() * kpabe::component_bytes()) as f64
}

pub fn measure_key_sizes(policies: &[UserPolicy]) -> KeySizes {
    let col = |f: &dyn Fn(&UserPolicy) -> f64| mean(&policies.iter().map(f).collect::<Vec<_>>());
    KeySizes {
        road_attrs_mean: col(&|p| p.road.leaf_count() as f64),
        time_attrs_mean: col(&|p| p.time.leaf_count() as f64),
        bytes_mean: col(&|p| kpabe::decryption_key_encoded_len(&p.combined()) as f64),
        road_bytes_mean: col(&|p| subtree_bytes(&p.road)),
        time_bytes_mean: col(&|p| subtree_bytes(&p.time)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelSizes {
    pub gamma_mean: f64,
    pub gamma_road_mean: f64,
    pub gamma_time_mean: f64,
    /// Mean size of the point representation of each device's segment.
    pub point_rep_mean: f64,
}

pub fn measure_labels(space: &AttributeSpace, devices: &[DevicePlacement], day: u32) -> Result<LabelSizes, ExperimentError> {
    let mut g = Vec::new();
    let mut gr = Vec::new();
    let mut gt = Vec::new();
    let mut pr = Vec::new();
    for d in devices {
        let l = space.label_for_device(d.at, day)?;
        g.push(l.len() as f64);
        gr.push(l.road.len() as f64);
        gt.push(l.time.len() as f64);
        let tree = space
            .street_tree(d.at.street)
            .ok_or(AttrSpaceError::UnknownStreet(d.at.street))?;
        let rep = tree.point_rep(d.at.segment).map_err(|source| AttrSpaceError::Street {
            street: d.at.street,
            source,
        })?;
        pr.push(rep.len() as f64);
    }
    Ok(LabelSizes {
        gamma_mean: mean(&g),
        gamma_road_mean: mean(&gr),
        gamma_time_mean: mean(&gt),
        point_rep_mean: mean(&pr),
    })
}

/// `n` devices on distinct road segments chosen uniformly, ids `1..=n`.
pub fn place_devices(city: &CityModel, n: usize, rng: &mut impl Rng) -> Result<Vec<DevicePlacement>, ExperimentError> {
    let segs: Vec<_> = city.road_segments().collect();
    if n > segs.len() {
        return Err(ExperimentError::Config(format!(
            "{n} devices requested, city has {} segments",
            segs.len()
        )));
    }
    let mut picks = index::sample(rng, segs.len(), n).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(i, s)| DevicePlacement {
            id: i as u32 + 1,
            at: segs[s],
        })
        .collect())
}

fn blank_row(rep: Representation, seed: u64) -> MetricsRow {
    MetricsRow {
        representation: rep.kind().label().into(),
        epsilon: rep.epsilon(),
        route_length_m: None,
        users: None,
        seed,
        affected_pct_mean: None,
        affected_pct_ci95: None,
        key_attrs_road_mean: None,
        key_attrs_time_mean: None,
        key_bytes_mean: None,
        key_bytes_road_mean: None,
        key_bytes_time_mean: None,
        devices: 0,
        gamma_mean: 0.0,
        gamma_road_mean: 0.0,
        ask_bytes_total: None,
        seal_time_ms: None,
    }
}

/// Everything measured for one (representation, route length) cell.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub representation: Representation,
    pub route_length_m: f64,
    pub sweep: SweepResult,
    pub keys: KeySizes,
    pub labels: LabelSizes,
    pub row: MetricsRow,
}

/// Runs the full representations × route lengths grid. Populations are
/// shared across representations for the same length.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>, ExperimentError> {
    cfg.validate()?;
    let city = cfg.city.load()?;
    let graph = RoadGraph::build(&city);
    let time = TimeConfig::new(cfg.lifetime_days)?;
    let devices = place_devices(&city, cfg.devices, &mut sub_rng(cfg.seed, "devices", 0))?;
    let spaces = cfg
        .representations
        .iter()
        .map(|r| AttributeSpace::build(&city, *r, time))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for &length in &cfg.route_lengths_m {
        let population = generate_population(
            &graph,
            length,
            cfg.users,
            cfg.subscription_days,
            cfg.lifetime_days,
            &mut sub_rng(cfg.seed, "population", length.to_bits()),
        )?;
        for (rep, space) in cfg.representations.iter().zip(&spaces) {
            let issued = issue_population(space, &population.specs)?;
            let sweep = revocation_sweep(&issued.road_sets);
            let keys = measure_key_sizes(&issued.policies);
            let labels = measure_labels(space, &devices, 1)?;
            let row = MetricsRow {
                route_length_m: Some(length),
                users: Some(cfg.users),
                affected_pct_mean: Some(sweep.summary.mean),
                affected_pct_ci95: Some(sweep.summary.ci95),
                key_attrs_road_mean: Some(keys.road_attrs_mean),
                key_attrs_time_mean: Some(keys.time_attrs_mean),
                key_bytes_mean: Some(keys.bytes_mean),
                key_bytes_road_mean: Some(keys.road_bytes_mean),
                key_bytes_time_mean: Some(keys.time_bytes_mean),
                devices: devices.len(),
                gamma_mean: labels.gamma_mean,
                gamma_road_mean: labels.gamma_road_mean,
                ..blank_row(*rep, cfg.seed)
            };
            out.push(SweepCell {
                representation: *rep,
                route_length_m: length,
                sweep,
                keys,
                labels,
                row,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SealBench {
    pub devices: usize,
    /// Fastest of the timed repetitions.
    pub seal_time_ms: f64,
    pub ask_bytes_total: u64,
    pub asks: usize,
    pub row: MetricsRow,
}

struct BenchSystem {
    sys: CitySystem,
    labels: LabelSizes,
    times: Vec<f64>,
    last: Option<SealReport>,
}

fn bench_system(
    cfg: &ExperimentConfig,
    representation: Representation,
    devices: usize,
) -> Result<BenchSystem, ExperimentError> {
    let mut city = cfg.city.load()?;
    city.devices = place_devices(&city, devices, &mut sub_rng(cfg.seed, "bench-devices", devices as u64))?;
    let placements = city.devices.clone();
    let sys = CitySystem::new(
        SystemConfig {
            city,
            representation,
            lifetime_days: cfg.lifetime_days,
            security_bits: cfg.security_bits,
            start_day: 1,
        },
        cfg.seed,
    )?;
    let labels = measure_labels(sys.ttp().space(), &placements, 1)?;
    Ok(BenchSystem {
        sys,
        labels,
        times: Vec::new(),
        last: None,
    })
}

/// Times full seal procedures (one new generation for every device) for
/// each device count in `device_counts`. Repetitions are interleaved across
/// the counts so slow drift in machine load hits every count alike; each
/// count reports its fastest repetition.
pub fn bench_seal_series(
    cfg: &ExperimentConfig,
    representation: Representation,
    device_counts: &[usize],
    repeats: usize,
) -> Result<Vec<SealBench>, ExperimentError> {
    cfg.validate()?;
    let mut systems = device_counts
        .iter()
        .map(|&n| bench_system(cfg, representation, n))
        .collect::<Result<Vec<_>, _>>()?;
    for _ in 0..repeats.max(1) {
        for b in &mut systems {
            let t = Instant::now();
            let rep = b.sys.seal_day()?;
            b.times.push(t.elapsed().as_secs_f64() * 1e3);
            if let Some((d, why)) = rep.rejected.first() {
                return Err(ProtocolError::BootRejected {
                    device: *d,
                    reason: why.clone(),
                }
                .into());
            }
            b.last = Some(rep);
        }
    }
    let mut out = Vec::with_capacity(systems.len());
    for (b, &devices) in systems.into_iter().zip(device_counts) {
        let seal_time_ms = b.times.iter().copied().fold(f64::INFINITY, f64::min);
        let sealed = b.last.expect("at least one repetition").sealed;
        let ask_bytes_total: u64 = sealed
            .iter()
            .map(|id| b.sys.css().ask(id).expect("sealed ids are stored").encoded_len() as u64)
            .sum();
        let row = MetricsRow {
            devices,
            gamma_mean: b.labels.gamma_mean,
            gamma_road_mean: b.labels.gamma_road_mean,
            ask_bytes_total: Some(ask_bytes_total),
            seal_time_ms: Some(seal_time_ms),
            ..blank_row(representation, cfg.seed)
        };
        out.push(SealBench {
            devices,
            seal_time_ms,
            ask_bytes_total,
            asks: sealed.len(),
            row,
        });
    }
    Ok(out)
}

pub fn bench_seal(
    cfg: &ExperimentConfig,
    representation: Representation,
    devices: usize,
    repeats: usize,
) -> Result<SealBench, ExperimentError> {
    Ok(bench_seal_series(cfg, representation, &[devices], repeats)?
        .pop()
        .expect("one device count"))
}

/// Seal benchmark over every configured representation and device count.
pub fn run_bench(cfg: &ExperimentConfig, repeats: usize) -> Result<Vec<SealBench>, ExperimentError> {
    let mut out = Vec::new();
    for rep in &cfg.representations {
        out.extend(bench_seal_series(cfg, *rep, &cfg.bench_devices, repeats)?);
    }
    Ok(out)
}

/// Parses `basic`, `segtree` or `pool` with its ε.
pub fn parse_representation(name: &str, epsilon: u32) -> Result<Representation, ExperimentError> {
    let kind = match name {
        "basic" => RepresentationKind::Basic,
        "segtree" => RepresentationKind::SegmentTree,
        "pool" => RepresentationKind::AttributePool,
        other => {
            return Err(ExperimentError::Config(format!(
                "unknown representation {other:?} (basic, segtree, pool)"
            )))
        }
    };
    let eps = if kind == RepresentationKind::AttributePool { epsilon } else { 1 };
    Ok(Representation::new(kind, eps)?)
}
