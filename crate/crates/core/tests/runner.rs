//! End-to-end runner behaviour: determinism, artifacts, errors, sweeps.

use std::fs;
use std::path::Path;

use qme_core::runner::{self, config, output::format_sci, Diagnostic, RunOptions, Table};
use qme_core::QmeError;

const SMALL: &str = r#"
scenario = "small"
description = "test"
diagnostics = ["trace_distance", "entanglement_entropy", "overlaps"]
realizations = 4
master_seed = 99

[model]
kind = "mfim"
n_sites = 6

[[states]]
kind = "product"
theta = 0.4
phi = 0.0

[[states]]
kind = "random_angles"
f = 0.5

[[states]]
kind = "entangled"
axis = "y"
theta = "pi/3"
dt = 0.3

[time]
t_max = 5.0
dt = 0.1

[output]
cache = false
"#;

fn opts(dir: &Path, threads: usize) -> RunOptions {
    RunOptions { outdir: Some(dir.to_path_buf()), threads: Some(threads), dry: false }
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "meta.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn identical_configs_reproduce_every_byte() {
    let cfg = config::from_str(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = runner::run(&cfg, &opts(a.path(), 1)).unwrap();
    let rb = runner::run(&cfg, &opts(b.path(), 1)).unwrap();
    let (da, db) = (ra.output_dir.unwrap(), rb.output_dir.unwrap());
    assert_eq!(da.file_name(), db.file_name());
    let (fa, fb) = (artifact_bytes(&da), artifact_bytes(&db));
    assert!(fa.iter().any(|(n, _)| n == "series_trace_distance.csv"));
    assert!(fa.iter().any(|(n, _)| n == "overlaps.csv"));
    assert_eq!(fa, fb);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = config::from_str(SMALL).unwrap();
    let serial = runner::run(&cfg, &RunOptions { threads: Some(1), dry: true, ..Default::default() }).unwrap();
    let parallel = runner::run(&cfg, &RunOptions { threads: Some(3), dry: true, ..Default::default() }).unwrap();
    for (s, p) in serial.series.iter().zip(&parallel.series) {
        for (x, y) in s.mean.iter().flatten().zip(p.mean.iter().flatten()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
    for (s, p) in serial.states.iter().zip(&parallel.states) {
        assert_eq!(s.ipr, p.ipr);
        assert_eq!(s.delta0, p.delta0);
    }
}

#[test]
fn random_states_draw_one_seed_per_realization() {
    let cfg = config::from_str(SMALL).unwrap();
    let rec = runner::run(&cfg, &RunOptions { dry: true, ..Default::default() }).unwrap();
    let counts: Vec<usize> = rec.states.iter().map(|s| s.realizations).collect();
    assert_eq!(counts, [1, 4, 4]);
    let seeds: Vec<u64> = rec.seeds.iter().filter_map(|s| s.state_seed).collect();
    assert_eq!(seeds.len(), 8);
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(unique.len(), 8);
    // the random states actually vary across realizations
    assert!(rec.states[1].delta0.stderr > 0.0);
}

#[test]
fn csv_files_round_trip_the_in_memory_series() {
    let cfg = config::from_str(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rec = runner::run(&cfg, &opts(dir.path(), 2)).unwrap();
    let out = rec.output_dir.as_ref().unwrap();
    let table = Table::read(&out.join("series_trace_distance.csv")).unwrap();
    let series = rec.series(Diagnostic::TraceDistance).unwrap();
    assert_eq!(table.header[0], "t");
    for (label, values) in series.labels.iter().zip(&series.mean) {
        let col = table.column(label).unwrap();
        for (x, y) in values.iter().zip(col) {
            assert_eq!(format_sci(*x).parse::<f64>().unwrap(), *y);
        }
    }
    assert!(table.column("th0.4_ph0_se").is_none());
    assert!(table.column("f0.5_se").is_some());
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_hash"], rec.config_hash.as_str());
    assert_eq!(meta["master_seed"], 99);
    // the written config reproduces the run hash
    let again = config::from_str(&fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(again.hash(), rec.config_hash);
}

#[test]
fn errors_map_to_exit_codes() {
    let unknown = SMALL.replace("n_sites = 6", "n_sites = 6\ncolour = 1");
    let err = config::from_str(&unknown).unwrap_err();
    assert!(matches!(&err, QmeError::Config { key, .. } if key == "colour"), "{err}");
    assert_eq!(err.exit_code(), 2);

    let bad_theta = SMALL.replace("theta = 0.4", "theta = 4.0");
    let err = config::from_str(&bad_theta).unwrap_err();
    assert!(matches!(&err, QmeError::Config { key, .. } if key == "states[0].theta"), "{err}");

    let mut table = config::parse_toml(SMALL).unwrap();
    config::set_path(&mut table, "output.max_dim", toml::Value::Integer(32)).unwrap();
    let err =
        runner::run(&config::from_table(table).unwrap(), &RunOptions { dry: true, ..Default::default() }).unwrap_err();
    assert!(matches!(err, QmeError::DimensionCap { dim: 64, cap: 32 }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn overrides_and_builtin_ids_load() {
    let cfg = runner::load_config("fig1_type1", &["model.n_sites=8".into(), "time.t_max=2".into()]).unwrap();
    assert_eq!(cfg.model.n_sites, 8);
    assert_eq!(cfg.time.t_max, Some(2.0));
    assert!(runner::load_config("no_such_scenario", &[]).is_err());
    assert!(runner::load_config("fig1_type1", &["model.n_sites".into()]).is_err());
}

#[test]
fn sweep_runs_each_value_and_writes_a_summary() {
    let mut table = config::parse_toml(SMALL).unwrap();
    table.insert("realizations".into(), toml::Value::Integer(2));
    let dir = tempfile::tempdir().unwrap();
    let rec = runner::sweep(&table, Some("states.*.theta"), Some(&[0.3, 0.9]), &opts(dir.path(), 1)).unwrap();
    assert_eq!(rec.runs.len(), 2);
    let path = rec.summary_path.unwrap();
    let text = fs::read_to_string(path).unwrap();
    // header plus one row per state and value; the random-angle state has no theta
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.starts_with("states.*.theta,label,"));
    let err = runner::sweep(&table, Some("scenario"), Some(&[1.0]), &opts(dir.path(), 1)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn iso_energy_states_share_their_energy() {
    let text = r#"
scenario = "iso"
diagnostics = ["trace_distance"]
[model]
kind = "mfim"
n_sites = 6
[[states]]
kind = "iso_energy"
e_target = -0.4
count = 4
[time]
t_max = 1.0
dt = 0.5
[output]
cache = false
"#;
    let rec = runner::run(&config::from_str(text).unwrap(), &RunOptions { dry: true, ..Default::default() }).unwrap();
    assert_eq!(rec.states.len(), 4);
    // finite chains differ from the per-site formula only through the open ends
    let e: Vec<f64> = rec.states.iter().map(|s| s.energy_density.mean).collect();
    let spread = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - e.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.5, "{e:?}");
}
