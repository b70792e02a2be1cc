use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bornrate::harness::{parse_report, ReportFormat};
use bornrate::madelung::{read_polar_csv, read_wave_csv};
use bornrate::sampler::read_events_csv;
use serde_json::Value;

const SUBCOMMANDS: [&str; 9] = [
    "density",
    "moments",
    "bound",
    "sample",
    "verify",
    "replicate",
    "sweep",
    "madelung",
    "trajectories",
];

fn bornrate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bornrate"))
        .args(args)
        .current_dir(dir)
        .env_remove("BORNRATE_OUT_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Set `UPDATE_GOLDEN=1` to rewrite the files after an intended change.
#[test]
fn help_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut pages: Vec<(String, Vec<&str>)> = vec![("bornrate".into(), vec!["--help"])];
    pages.extend(SUBCOMMANDS.iter().map(|s| (s.to_string(), vec![*s, "--help"])));
    for (name, args) in pages {
        let o = bornrate(dir.path(), &args);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8(o.stdout).unwrap();
        let path = golden_dir().join(format!("{name}.txt"));
        if update {
            fs::create_dir_all(golden_dir()).unwrap();
            fs::write(&path, &text).unwrap();
        }
        assert_eq!(text, fs::read_to_string(&path).unwrap(), "help for {name} changed");
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bornrate(dir.path(), &["density", "--bogus"])), 2);
    assert_eq!(code(&bornrate(dir.path(), &[])), 2);
    assert_eq!(code(&bornrate(dir.path(), &["replicate", "--preset", "figure-buildup", "--config", "x.json"])), 2);
}

#[test]
fn replicate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = bornrate(d, &["replicate"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let report = parse_report(&fs::read_to_string(d.join("report.json")).unwrap(), ReportFormat::Json).unwrap();
    assert_eq!(report.rows.len(), 18);
    assert_eq!(report.summary.lower_const, 18);

    fs::write(d.join("low.json"), r#"{"variants": {"lower_bound_constant": 0.001}}"#).unwrap();
    assert_eq!(code(&bornrate(d, &["replicate", "--config", "low.json", "--out", "low.csv"])), 1);
    let csv = parse_report(&fs::read_to_string(d.join("low.csv")).unwrap(), ReportFormat::Csv).unwrap();
    assert_eq!(csv.summary.lower_const, 0);

    let missing = bornrate(d, &["replicate", "--config", "absent.json"]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.json"));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"geometry": {"w_nm": -3}}"#).unwrap();
    let o = bornrate(d, &["density", "--config", "bad.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("w_nm"));
    fs::write(d.join("typo.json"), r#"{"n_value": [10]}"#).unwrap();
    let o = bornrate(d, &["replicate", "--config", "typo.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_value"));
}

#[test]
fn density_points_include_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bornrate(d, &["density", "--points", "3", "--out", "d.csv"])), 0);
    let text = fs::read_to_string(d.join("d.csv")).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (t, i) = l.split_once(',').unwrap();
            (t.parse().unwrap(), i.parse().unwrap())
        })
        .collect();
    assert_eq!(text.lines().next(), Some("t_mm,intensity"));
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
    assert_eq!(rows[1].1, 1.0);

    let start = std::time::Instant::now();
    assert_eq!(code(&bornrate(d, &["density", "--points", "10000"])), 0);
    assert!(start.elapsed().as_secs_f64() < 1.0);
    assert_eq!(fs::read_to_string(d.join("density.csv")).unwrap().lines().count(), 10_001);
}

#[test]
fn out_dir_override_applies_to_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bornrate"))
        .args(["density", "--points", "5", "--out", "nested/d.csv"])
        .current_dir(dir.path())
        .env("BORNRATE_OUT_DIR", "outputs")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("outputs/nested/d.csv").exists());
}

#[test]
fn sample_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bornrate(d, &["sample", "--n", "803", "--seed", "5"])), 0);
    let events = read_events_csv(fs::File::open(d.join("events.csv")).unwrap()).unwrap();
    assert_eq!(events.len(), 803);
    assert_eq!(code(&bornrate(d, &["verify", "--events", "events.csv", "--origin", "from-b"])), 0);
    let v = json(d.join("verify.json"));
    assert_eq!(v["N"], 803);
    assert_eq!(v["verdicts"]["lower_const"], true);

    // deterministic given the seed
    assert_eq!(code(&bornrate(d, &["sample", "--n", "803", "--seed", "5", "--out", "again.csv"])), 0);
    assert_eq!(fs::read(d.join("events.csv")).unwrap(), fs::read(d.join("again.csv")).unwrap());

    fs::write(d.join("outside.csv"), "index,t_mm\n0,0.5\n1,7.0\n").unwrap();
    assert_eq!(code(&bornrate(d, &["verify", "--events", "outside.csv"])), 2);
}

#[test]
fn moments_and_bound_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bornrate(d, &["moments"])), 0);
    assert_eq!(code(&bornrate(d, &["bound", "--n", "400"])), 0);
    let m = json(d.join("moments.json"));
    let b = json(d.join("bound.json"));
    let ratio = m["moment_ratio"].as_f64().unwrap();
    assert!(ratio >= 1.0);
    assert_eq!(b["moment_ratio"].as_f64().unwrap(), ratio);
    let rho = m["rho"].as_f64().unwrap();
    let sigma = m["sigma"].as_f64().unwrap();
    assert!((rho / sigma.powi(3) / ratio - 1.0).abs() < 1e-12);
    let lower = b["rhs_lower_const"].as_f64().unwrap();
    assert!((b["rhs_with_sqrtN_lower"].as_f64().unwrap() - lower / 20.0).abs() < 1e-15);
}

#[test]
fn sweep_reports_negative_slope() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bornrate(d, &["sweep", "--seeds", "20", "--n-max", "10000"])), 0);
    let fits = json(d.join("sweep.json"));
    for f in fits.as_array().unwrap() {
        let slope = f["slope"].as_f64().unwrap();
        assert!((-0.75..=-0.25).contains(&slope), "{slope}");
    }
}

#[test]
fn madelung_zero_steps_writes_initial_snapshot_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bornrate(d, &["madelung", "--steps", "0", "--out-dir", "m"])), 0);
    let mut names: Vec<String> = fs::read_dir(d.join("m"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["polar_000000.csv", "psi_000000.csv", "residuals.json"]);
    let summary = json(d.join("m/residuals.json"));
    assert_eq!(summary["residuals"].as_array().unwrap().len(), 0);
}

#[test]
fn plane_wave_residuals_vanish_and_snapshots_reparse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bornrate(d, &["madelung", "--steps", "50", "--snapshot-every", "5"])), 0);
    let summary = json(d.join("madelung/residuals.json"));
    let records = summary["residuals"].as_array().unwrap();
    assert_eq!(records.len(), 10);
    for r in records {
        for key in ["hj_max", "hj_l2", "continuity_max", "continuity_l2"] {
            assert!(r[key].as_f64().unwrap() < 1e-8, "{key}: {}", r[key]);
        }
    }
    for step in summary["snapshots"].as_array().unwrap() {
        let step = step.as_u64().unwrap();
        let psi = read_wave_csv(fs::File::open(d.join(format!("madelung/psi_{step:06}.csv"))).unwrap()).unwrap();
        let polar = read_polar_csv(fs::File::open(d.join(format!("madelung/polar_{step:06}.csv"))).unwrap()).unwrap();
        assert_eq!(psi.len(), 256);
        assert_eq!(polar.len(), 256);
        assert!(polar.iter().all(|r| !r.3 && (r.1 - 1.0).abs() < 1e-9));
    }
}

#[test]
fn free_gaussian_residuals_shrink_at_second_order_in_dt() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut l2 = Vec::new();
    for (dt, steps) in [(0.1, 10), (0.05, 20)] {
        let cfg = format!(
            r#"{{"grid": {{"x_min": -40, "x_max": 40, "points": 2048, "dt": {dt}}},
                "potential": {{"kind": "free"}},
                "initial_state": {{"kind": "gaussian", "center": 0, "width": 1, "k0": 1}}}}"#
        );
        fs::write(d.join("g.json"), cfg).unwrap();
        let every = (steps - 1).to_string();
        let steps = steps.to_string();
        let o = bornrate(d, &["madelung", "--config", "g.json", "--steps", &steps, "--snapshot-every", &every, "--out-dir", "g"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let summary = json(d.join("g/residuals.json"));
        let last = summary["residuals"].as_array().unwrap().last().unwrap().clone();
        l2.push((last["hj_l2"].as_f64().unwrap(), last["continuity_l2"].as_f64().unwrap()));
    }
    for (coarse, fine) in [(l2[0].0, l2[1].0), (l2[0].1, l2[1].1)] {
        let order = (coarse / fine).log2();
        assert!((order - 2.0).abs() <= 0.5, "order {order}");
    }
}

#[test]
fn oversized_step_exits_with_instability_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("h.json"),
        r#"{"grid": {"x_min": -10, "x_max": 10, "points": 256, "dt": 5},
            "potential": {"kind": "harmonic", "omega": 1, "center": 0},
            "initial_state": {"kind": "harmonic_ground", "omega": 1}}"#,
    )
    .unwrap();
    assert_eq!(code(&bornrate(d, &["madelung", "--config", "h.json"])), 3);
    assert_eq!(code(&bornrate(d, &["trajectories", "--config", "h.json"])), 3);
}

#[test]
fn trajectories_track_the_density() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bornrate(d, &["trajectories", "--preset", "free-gaussian", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let summary = json(d.join("trajectories/trajectories.json"));
    let last = summary["snapshots"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(last["step"], 50);
    assert!(last["ks_distance"].as_f64().unwrap() < 0.02);
    assert!(summary["collisions"].as_array().unwrap().is_empty());
    let text = fs::read_to_string(d.join("trajectories/trajectories_000050.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("index,x"));
    let positions: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.parse().unwrap())
        .collect();
    assert_eq!(positions.len(), 10_000);
}
