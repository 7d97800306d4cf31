use std::collections::BTreeSet;

use urban_abe_core::attrspace::{PolicySpec, Representation};
use urban_abe_core::citysim::experiment::{generate_population, issue_population, revocation_sweep, sub_rng};
use urban_abe_core::citysim::route::RoadGraph;
use urban_abe_core::protocol::{CitySystem, SystemConfig};

const USERS: usize = 16;

fn toy_with(rep: Representation) -> SystemConfig {
    SystemConfig {
        representation: rep,
        ..SystemConfig::toy()
    }
}

fn population(cfg: &SystemConfig, length: f64) -> Vec<PolicySpec> {
    let graph = RoadGraph::build(&cfg.city);
    generate_population(&graph, length, USERS, 10, cfg.lifetime_days, &mut sub_rng(5, "oracle", 0))
        .unwrap()
        .specs
}

fn system_with(cfg: &SystemConfig, specs: &[PolicySpec]) -> CitySystem {
    let mut sys = CitySystem::new(cfg.clone(), 21).unwrap();
    for s in specs {
        let u = sys.register_user();
        sys.distribute_key(u, s).unwrap();
    }
    sys
}

/// Users whose stored components went stale when `victim` alone was revoked
/// through the full protocol.
fn protocol_affected(cfg: &SystemConfig, specs: &[PolicySpec], victim: usize) -> BTreeSet<usize> {
    let mut sys = system_with(cfg, specs);
    let ids: Vec<u32> = sys.css().users().collect();
    sys.revoke_key(ids[victim]).unwrap();
    let css = sys.css();
    ids.iter()
        .enumerate()
        .filter(|(i, _)| *i != victim)
        .filter(|(_, u)| {
            css.user_components(**u)
                .unwrap()
                .iter()
                .any(|(a, c)| c.version < css.histories()[a].current_version())
        })
        .map(|(i, _)| i)
        .collect()
}

fn sweep_matches_protocol(rep: Representation, length: f64) {
    let cfg = toy_with(rep);
    let specs = population(&cfg, length);
    let sys = system_with(&cfg, &specs);
    let issued = issue_population(sys.ttp().space(), &specs).unwrap();
    let ids: Vec<u32> = sys.css().users().collect();
    for (i, u) in ids.iter().enumerate() {
        assert_eq!(issued.road_sets[i], sys.ttp().issued_key(*u).unwrap().road, "user {i}");
    }
    let sweep = revocation_sweep(&issued.road_sets);
    let total: usize = sweep.affected.iter().map(BTreeSet::len).sum();
    assert!(total > 0 && total < USERS * (USERS - 1), "degenerate population: {total} affected pairs");
    for victim in 0..USERS {
        assert_eq!(
            sweep.affected[victim],
            protocol_affected(&cfg, &specs, victim),
            "{} at L={length}, revoking user {victim}",
            rep.kind().label()
        );
    }
}

#[test]
fn sweep_matches_protocol_basic() {
    sweep_matches_protocol(Representation::basic(), 150.0);
}

#[test]
fn sweep_matches_protocol_segment_tree() {
    sweep_matches_protocol(Representation::segment_tree(), 150.0);
}

#[test]
fn sweep_matches_protocol_pool() {
    sweep_matches_protocol(Representation::pool(2).unwrap(), 200.0);
}

#[test]
fn population_is_reproducible() {
    let cfg = SystemConfig::toy();
    assert_eq!(population(&cfg, 150.0), population(&cfg, 150.0));
}

mod fixture {
    use std::path::PathBuf;

    use urban_abe_core::citysim::city::{load_city, parse_city, write_city, RoadSegment};
    use urban_abe_core::citysim::experiment::{run_experiment, CitySource, ExperimentConfig};
    use urban_abe_core::citysim::route::RoadGraph;

    fn path() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/riverside.city")
    }

    #[test]
    fn fixture_loads_and_round_trips() {
        let city = load_city(&path()).unwrap();
        assert_eq!(city.name, "riverside");
        assert_eq!(city.streets.len(), 6);
        assert_eq!(city.devices.len(), 3);
        assert_eq!(city.devices[1].at, RoadSegment { street: 5, segment: 4 });
        let (a, b) = city.segment_endpoints(RoadSegment { street: 5, segment: 4 }).unwrap();
        assert!((a.distance(&b) - 25.0).abs() < 1e-9);
        assert_eq!(parse_city(&write_city(&city)).unwrap(), city);
        assert_eq!(RoadGraph::build(&city).edge_count(), 8 * 5 + 6);
    }

    #[test]
    fn experiment_runs_on_a_city_file() {
        let cfg = ExperimentConfig {
            city: CitySource::File { path: path() },
            route_lengths_m: vec![100.0, 200.0],
            users: 25,
            subscription_days: 30,
            lifetime_days: 365,
            devices: 3,
            ..ExperimentConfig::default()
        };
        let cells = run_experiment(&cfg).unwrap();
        assert_eq!(cells.len(), 2 * cfg.representations.len());
        assert!(cells.iter().all(|c| c.sweep.affected.len() == 25));
    }
}
