use std::path::Path;
use std::process::{Command as Proc, Output};

use shelab::smallball::Method;
use shelab_cli::record::{Cell, ResultRecord, Table, View};
use shelab_cli::{emit_plot_data, CliError, Command, ExperimentConfig};
use tempfile::TempDir;

fn shelab(args: &[&str], out: &Path) -> Output {
    Proc::new(env!("CARGO_BIN_EXE_shelab")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

const ALL: [Command; 8] = [
    Command::Simulate,
    Command::Smallball,
    Command::ExponentFit,
    Command::TailCurve,
    Command::Localize,
    Command::Mollify,
    Command::VerifyKernel,
    Command::VerifyCovariance,
];

#[test]
fn verify_kernel_passes_by_default() {
    let dir = TempDir::new().unwrap();
    let out = shelab(&["verify-kernel"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("verify-kernel.csv")).unwrap();
    assert!(csv.starts_with("check,parameter,reference,computed,abs_error\n"));
    assert!(csv.lines().count() > 10);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let mut cfg = ExperimentConfig::for_command(Command::Smallball);
    cfg.n = 200;
    cfg.base_seed = 17;
    let path = write_config(dir.path(), &cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(shelab(&["smallball", "--config", &path, "--threads", "1"], &a).status.success());
    assert!(shelab(&["smallball", "--config", &path, "--threads", "4"], &b).status.success());
    for f in ["smallball.csv", "smallball_curve.plot.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let ra: ResultRecord = serde_json::from_str(&std::fs::read_to_string(a.join("record.json")).unwrap()).unwrap();
    let rb: ResultRecord = serde_json::from_str(&std::fs::read_to_string(b.join("record.json")).unwrap()).unwrap();
    assert_eq!(ra.input_hash, rb.input_hash);
    assert_eq!(ra.table, rb.table);
}

#[test]
fn out_of_range_theta_names_the_field() {
    let dir = TempDir::new().unwrap();
    let out = shelab(&["smallball", "--theta", "0.7"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_config");
    assert_eq!(err["fields"][0]["field"], "event.theta");
    assert!(!dir.path().join("record.json").exists());
}

#[test]
fn all_field_errors_reported_together() {
    let mut cfg = ExperimentConfig::for_command(Command::Smallball);
    cfg.event.theta = 0.0;
    cfg.grid.n_x = 48;
    cfg.n = 10;
    match cfg.validate() {
        Err(CliError::Invalid(fields)) => {
            let names: Vec<&str> = fields.iter().map(|f| f.field.as_str()).collect();
            assert_eq!(names, ["grid.n_x", "event.theta", "n"]);
        }
        other => panic!("expected invalid config, got {other:?}"),
    }
}

#[test]
fn config_round_trips() {
    for c in ALL {
        let mut cfg = ExperimentConfig::for_command(c);
        cfg.method = Method::Splitting;
        cfg.t1 = Some(0.005);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.validate().is_ok(), "{c:?} default is invalid");
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let err = ExperimentConfig::from_json(r#"{"command": "simulate", "sigmaa": 1}"#).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn config_flag_takes_precedence_over_field_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = ExperimentConfig::for_command(Command::Simulate);
    let path = write_config(dir.path(), &cfg);
    let out = Proc::new(env!("CARGO_BIN_EXE_shelab"))
        .args(["simulate", "--config", &path, "--n-x", "64", "--seed", "9", "--dump-config"])
        .output()
        .unwrap();
    let eff = ExperimentConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(eff.grid.n_x, cfg.grid.n_x);
    assert_eq!(eff.base_seed, 9);
}

#[test]
fn empty_record_gives_header_only_csv() {
    let rec = ResultRecord::empty(&ExperimentConfig::default());
    for view in [View::SmallballCurve, View::ExponentFit, View::TailCurve, View::PicardDecay] {
        let (csv, _) = emit_plot_data(&rec, view).unwrap();
        assert_eq!(csv, format!("{}\n", view.columns().join(",")));
    }
}

#[test]
fn missing_columns_are_an_error() {
    let mut table = Table::new(&["epsilon", "p_hat"]);
    table.push(vec![Cell::Num(0.5), Cell::Num(0.1)]);
    let rec = ResultRecord::new(&ExperimentConfig::default(), table, serde_json::Value::Null);
    match emit_plot_data(&rec, View::SmallballCurve) {
        Err(CliError::MissingColumns(cols)) => assert_eq!(cols, ["ci_lo", "ci_hi", "method"]),
        other => panic!("expected missing columns, got {other:?}"),
    }
}

#[test]
fn floats_keep_full_precision() {
    let x = 0.1 + 0.2;
    let s = Cell::Num(x).render();
    assert_eq!(s.parse::<f64>().unwrap(), x);
    assert_eq!(Cell::Num(f64::NAN).render(), "NaN");
}

#[test]
fn hashes_track_the_config() {
    let a = ExperimentConfig::default();
    let mut b = a.clone();
    b.base_seed = 1;
    let (ra, rb) = (ResultRecord::empty(&a), ResultRecord::empty(&b));
    assert_eq!(ra.config_digest, ResultRecord::empty(&a).config_digest);
    assert_ne!(ra.config_digest, rb.config_digest);
    assert_ne!(ra.input_hash, ra.config_digest);
    assert_eq!(ra.input_hash.len(), 64);
}

#[test]
fn exponent_fit_writes_sidecar() {
    let dir = TempDir::new().unwrap();
    let out = shelab(&["exponent-fit", "--n", "400", "--epsilons", "0.8,0.85,0.9,0.95"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("exponent_fit.meta.json")).unwrap()).unwrap();
    for key in ["slope", "intercept", "r2", "slope_stderr"] {
        assert!(meta[key].is_f64(), "{key} missing");
    }
    assert!(meta["slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn hypothesis_on_initial_profile_is_enforced() {
    let mut cfg = ExperimentConfig::for_command(Command::Smallball);
    cfg.u0 = shelab_cli::config::U0Preset::Sine { amplitude: 5.0, mode: 3 };
    cfg.n = 100;
    let err = shelab_cli::run(&cfg).unwrap_err();
    assert_eq!(err.kind(), "domain");
    cfg.event.allow_any_u0 = true;
    let rec = shelab_cli::run(&cfg).unwrap();
    assert_eq!(rec.table.rows.len(), cfg.event.epsilons.len());
}

#[test]
fn failed_checks_exit_with_three() {
    let err = CliError::ChecksFailed("x".into());
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_json().contains("checks_failed"));
}
