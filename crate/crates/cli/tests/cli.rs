use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tubalsr_cli::commands::{cmd_localize, cmd_svd_report, cmd_synth};
use tubalsr_cli::config::{LocalizeConfig, LowRankConfig, SvdReportConfig, SynthConfig};
use tubalsr_cli::error::exit;
use tubalsr_cli::run::{Manifest, MANIFEST};

fn tubalsr(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tubalsr"));
    cmd.args(args).env_remove("TUBALSR_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn error_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn rank_two_tensor_reaches_full_energy_at_component_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = write_config(tmp.path(), "lr.json", r#"{"low_rank": {"dims": [8, 9, 5], "rank": 2}}"#);
    let synth = run_dir(&tubalsr(&["synth", "--config", &cfg, "--seed", "3", "--out", out], &[]));
    let input = synth.join("tensor.tns3");
    let report = run_dir(&tubalsr(&["svd-report", "--input", input.to_str().unwrap(), "--out", out], &[]));
    let (header, rows) = read_csv(&report.join("svd_report.csv"));
    assert_eq!(header, ["component", "tsvd_cdf", "matrix_cdf"]);
    let tsvd: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(tsvd[0] < 1.0 - 1e-9);
    assert!((tsvd[1] - 1.0).abs() < 1e-12);
    let m = Manifest::load(&report).unwrap();
    assert_eq!(m.results["tsvd_components"], 2);
}

#[test]
fn localize_writes_cdfs_ending_at_one() {
    let tmp = tempfile::tempdir().unwrap();
    let run = cmd_localize(&LocalizeConfig::default(), tmp.path()).unwrap();
    for name in ["wknn", "classifier", "classifier_sr"] {
        let (header, rows) = read_csv(&run.dir.join(format!("cdf_{name}.csv")));
        assert_eq!(header, ["error_m", "fraction"]);
        let fractions: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert_eq!(*fractions.last().unwrap(), 1.0);
        assert!(fractions.windows(2).all(|w| w[0] < w[1]));
    }
    let (header, rows) = read_csv(&run.dir.join("medians.csv"));
    assert_eq!(header[0], "seed");
    assert_eq!(rows.len(), 1);
    assert!(run.dir.join("classifier_sr.tns3").is_file() && run.dir.join("classifier_sr.json").is_file());
}

#[test]
fn synth_writes_the_6x16_map() {
    let tmp = tempfile::tempdir().unwrap();
    let run = cmd_synth(&SynthConfig::default(), tmp.path()).unwrap();
    let map = tubalsr::RadioMap::load(run.dir.join("map.tns3")).unwrap();
    assert_eq!(map.tensor.dims(), (6, 16, 14));
    let (header, rows) = read_csv(&run.dir.join("aps.csv"));
    assert_eq!(header, ["ap", "x_m", "y_m"]);
    assert_eq!(rows.len(), 14);
    let names: Vec<&str> = run.manifest.artifacts.iter().map(|a| a.path.as_str()).collect();
    assert_eq!(names, ["aps.csv", "map.json", "map.tns3"]);
}

#[test]
fn run_directories_are_content_addressed() {
    let tmp = tempfile::tempdir().unwrap();
    let mk = |seed| SynthConfig {
        seed,
        low_rank: Some(LowRankConfig { dims: (4, 4, 3), rank: 1 }),
        ..Default::default()
    };
    let a = cmd_synth(&mk(1), tmp.path()).unwrap();
    let again = cmd_synth(&mk(1), tmp.path()).unwrap();
    let b = cmd_synth(&mk(2), tmp.path()).unwrap();
    assert_eq!(a.dir, again.dir);
    assert_eq!(a.manifest.without_timings(), again.manifest.without_timings());
    assert_ne!(a.dir, b.dir);
    assert_ne!(a.manifest.config_hash, b.manifest.config_hash);

    // a foreign directory in the way is left alone
    let mut m = Manifest::load(&b.dir).unwrap();
    m.config_hash = "0".repeat(64);
    fs::write(b.dir.join(MANIFEST), serde_json::to_string(&m).unwrap()).unwrap();
    assert!(cmd_synth(&mk(2), tmp.path()).is_err());
    assert!(b.dir.join("tensor.tns3").is_file());
}

#[test]
fn failures_exit_with_distinct_codes_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();

    let o = tubalsr(&["no-such-command"], &[]);
    assert_eq!(o.status.code(), Some(exit::USAGE));
    assert_eq!(error_json(&o)["error"], "usage");

    let o = tubalsr(&["svd-report", "--input", "/nonexistent.tns3", "--out", out], &[]);
    assert_eq!(o.status.code(), Some(exit::MISSING_FILE));
    assert_eq!(error_json(&o)["code"], exit::MISSING_FILE);

    let o = tubalsr(&["localize", "--config", "/nonexistent.json", "--out", out], &[]);
    assert_eq!(o.status.code(), Some(exit::MISSING_FILE));

    let bad = write_config(tmp.path(), "bad.json", r#"{"experiment": {"kk": 3}}"#);
    let o = tubalsr(&["localize", "--config", &bad, "--out", out], &[]);
    assert_eq!(o.status.code(), Some(exit::SCHEMA));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("kk"));

    let tns = tmp.path().join("junk.tns3");
    fs::write(&tns, b"not a tensor").unwrap();
    let o = tubalsr(&["svd-report", "--input", tns.to_str().unwrap(), "--out", out], &[]);
    assert_eq!(o.status.code(), Some(exit::MALFORMED_FILE));

    // the 6 x 16 map is too small for 8 x 8 fine patches
    let map = run_dir(&tubalsr(&["synth", "--out", out], &[])).join("map.tns3");
    let cfg = write_config(tmp.path(), "td.json", &format!(r#"{{"input": {:?}}}"#, map.to_str().unwrap()));
    let o = tubalsr(&["train-dict", "--config", &cfg, "--out", out], &[]);
    assert_eq!(o.status.code(), Some(exit::INVALID_INPUT));

    let o = tubalsr(&["synth", "--out", out], &[("TUBALSR_THREADS", "0")]);
    assert_eq!(o.status.code(), Some(exit::USAGE));

    let codes = [
        exit::USAGE,
        exit::MISSING_FILE,
        exit::SCHEMA,
        exit::INVALID_INPUT,
        exit::SOLVER,
        exit::MALFORMED_FILE,
        exit::IO,
    ];
    let mut sorted = codes.to_vec();
    sorted.dedup();
    assert!(codes.iter().all(|&c| c > 0) && sorted.len() == codes.len());
}

#[test]
fn svd_report_requires_an_input() {
    let tmp = tempfile::tempdir().unwrap();
    let err = cmd_svd_report_default(tmp.path());
    assert_eq!(err, exit::SCHEMA);
}

fn cmd_svd_report_default(out: &Path) -> i32 {
    use tubalsr_cli::config::CommandConfig;
    let cfg = SvdReportConfig::default();
    match cfg.validate().and_then(|_| cmd_svd_report(&cfg, out)) {
        Ok(_) => 0,
        Err(e) => e.code(),
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sr.json",
        r#"{"experiment": {"region": [16.0, 16.0], "aps": 4, "block": [4, 4],
            "sr": {"coarse_patch": [2, 2], "stride": [1, 1], "dict": {"r": 8, "iters": 2}}}}"#,
    );
    let one = tmp.path().join("one");
    let many = tmp.path().join("many");
    let a = run_dir(&tubalsr(
        &["super-resolve", "--config", &cfg, "--out", one.to_str().unwrap()],
        &[("TUBALSR_THREADS", "1")],
    ));
    let b = run_dir(&tubalsr(
        &["super-resolve", "--config", &cfg, "--out", many.to_str().unwrap()],
        &[("TUBALSR_THREADS", "4")],
    ));
    assert_eq!(a.file_name(), b.file_name());
    assert_eq!(fs::read(a.join("sr.tns3")).unwrap(), fs::read(b.join("sr.tns3")).unwrap());
    assert_eq!(
        Manifest::load(&a).unwrap().without_timings(),
        Manifest::load(&b).unwrap().without_timings()
    );
}

#[test]
fn model_mode_super_resolves_a_reference_map() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let site = write_config(tmp.path(), "site.json", r#"{"region": [16.0, 16.0], "aps": 4}"#);
    let map = run_dir(&tubalsr(&["synth", "--config", &site, "--out", out], &[])).join("map.tns3");
    let td = write_config(
        tmp.path(),
        "td.json",
        &format!(r#"{{"input": {:?}, "sr": {{"dict": {{"r": 8, "iters": 2}}}}}}"#, map.to_str().unwrap()),
    );
    let model = run_dir(&tubalsr(&["train-dict", "--config", &td, "--out", out], &[])).join("model");
    let (header, rows) = read_csv(&model.parent().unwrap().join("objective.csv"));
    assert_eq!(header, ["iteration", "objective"]);
    assert_eq!(rows.len(), 3);
    let sr = write_config(
        tmp.path(),
        "sr.json",
        &format!(r#"{{"model": {:?}, "reference": {:?}}}"#, model.to_str().unwrap(), map.to_str().unwrap()),
    );
    let run = run_dir(&tubalsr(&["super-resolve", "--config", &sr, "--out", out], &[]));
    let fine = tubalsr::RadioMap::load(&map).unwrap();
    let est = tubalsr::RadioMap::load(run.join("sr.tns3")).unwrap();
    assert_eq!(est.tensor.dims(), fine.tensor.dims());
    let (header, rows) = read_csv(&run.join("psnr.csv"));
    assert_eq!(header, ["seed", "psnr_sr", "psnr_trilinear", "consistency_rmse"]);
    assert!(rows[0][1].parse::<f64>().unwrap().is_finite());
}
