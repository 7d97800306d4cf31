use std::path::Path;
use std::process::{Command, Output};

use urban_abe_core::citysim::metrics::{read_csv, strip_timing, COLUMNS};

fn urban_abe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urban-abe"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// 3×3 grid keeps the CLI runs short.
const SMALL: &str = r#"{
  "city": {"type": "grid", "blocks_x": 3, "blocks_y": 3, "block_length": 100.0, "segment_length": 25.0},
  "representations": [{"kind": "basic"}, {"kind": "segment_tree"}, {"kind": "attribute_pool", "epsilon": 3}],
  "route_lengths_m": [100.0, 200.0, 300.0],
  "users": 20,
  "subscription_days": 30,
  "lifetime_days": 365,
  "devices": 5,
  "bench_devices": [2, 4, 6]
}"#;

#[test]
fn demo_runs_and_shows_bottom_after_revocation() {
    let dir = tempfile::tempdir().unwrap();
    let o = urban_abe(&["demo", "--out", "trace.jsonl"], dir.path());
    let log = stderr(&o);
    assert_eq!(o.status.code(), Some(0), "{log}");
    assert!(log.contains("revoke   bob"), "{log}");
    assert!(log.lines().any(|l| l.contains("consume  bob") && l.ends_with('⊥')), "{log}");
    assert!(log.contains("audit"), "{log}");
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert!(trace.lines().count() > 10);
}

#[test]
fn tampered_boot_material_exits_with_invariant_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = urban_abe(&["demo", "--fail-inject", "tamper-boot"], dir.path());
    let log = stderr(&o);
    assert_eq!(o.status.code(), Some(1), "{log}");
    assert!(log.contains("MAC failure"), "{log}");
}

#[test]
fn bad_arguments_and_configs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(urban_abe(&["demo", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(urban_abe(&["experiment", "--rep", "fancy"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("zero.json"), r#"{"users": 0}"#).unwrap();
    let o = urban_abe(&["experiment", "--config", "zero.json"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("users must be positive"));
    std::fs::write(dir.path().join("typo.json"), r#"{"userz": 5}"#).unwrap();
    assert_eq!(urban_abe(&["experiment", "--config", "typo.json"], dir.path()).status.code(), Some(2));
    let o = urban_abe(&["experiment", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_writes_one_row_per_cell_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    let run = |out: &str| {
        let o = urban_abe(&["experiment", "--config", "small.json", "--seed", "4", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read_to_string(dir.path().join(out)).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    let rows = read_csv(a.as_bytes()).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.seed == 4 && r.users == Some(20) && r.affected_pct_mean.is_some()));
    assert_eq!(strip_timing(&a).unwrap(), strip_timing(&b).unwrap());

    let o = urban_abe(&["experiment", "--config", "small.json", "--seed", "5", "--out", "c.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let c = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_ne!(strip_timing(&a).unwrap(), strip_timing(&c).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    let o = urban_abe(
        &[
            "experiment", "--config", "small.json", "--rep", "pool", "--epsilon", "2", "--route-length", "150",
            "--users", "12", "--out", "o.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(std::fs::read(dir.path().join("o.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].representation.as_str(), rows[0].epsilon), ("pool", 2));
    assert_eq!((rows[0].route_length_m, rows[0].users), (Some(150.0), Some(12)));
}

#[test]
fn bench_reports_seal_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    let o = urban_abe(
        &["bench", "--config", "small.json", "--rep", "segtree", "--repeats", "1", "--out", "bench.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), COLUMNS.join(","));
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.iter().map(|r| r.devices).collect::<Vec<_>>(), vec![2, 4, 6]);
    assert!(rows.iter().all(|r| r.seal_time_ms.is_some() && r.gamma_mean > 0.0 && r.affected_pct_mean.is_none()));
    assert!(rows[0].ask_bytes_total < rows[2].ask_bytes_total);
}
