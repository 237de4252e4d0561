use std::path::Path;
use std::process::Command;

use aomsim::chaostest::Phase;
use aomsim::sweep::{load_diagram, CellPhase};

fn aomsim(dir: &Path, args: &[&str]) -> (bool, serde_json::Value, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_aomsim"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("SIM_G_AC")
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let json = serde_json::from_str(stdout.trim()).unwrap_or(serde_json::Value::Null);
    (out.status.success(), json, String::from_utf8(out.stderr).unwrap())
}

const FAST: &[&str] = &["--n-m", "2", "--n-c", "3", "--t-final", "210", "--dt", "0.01", "--record-stride", "100"];

#[test]
fn evolve_writes_observables_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["evolve", "--g-ac", "0", "--g-mc", "0", "--eta", "0.5"];
    args.extend_from_slice(FAST);
    let (ok, json, _) = aomsim(dir.path(), &args);
    assert!(ok, "{json}");
    assert_eq!(json["summary"]["regular"], true);
    let csv = std::fs::read_to_string(dir.path().join("observables.csv")).unwrap();
    assert!(csv.starts_with("t,n_m,n_c,n_a,x_m,p_m,corr,x,p,trunc_flag\n"));
    assert_eq!(csv.lines().count(), 1 + 211);
    let cfg = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(cfg.contains("eta = 0.5"));

    // Rerunning from the embedded config reproduces the file bit for bit.
    let again = tempfile::tempdir().unwrap();
    let (ok, ..) = aomsim(again.path(), &["evolve", "--config", dir.path().join("config.toml").to_str().unwrap()]);
    assert!(ok);
    assert_eq!(std::fs::read(again.path().join("observables.csv")).unwrap(), csv.into_bytes());
}

#[test]
fn chaos_test_reads_an_existing_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["evolve", "--g-ac", "0", "--g-mc", "0", "--eta", "0.5"];
    args.extend_from_slice(FAST);
    assert!(aomsim(dir.path(), &args).0);
    let input = dir.path().join("observables.csv");
    let (ok, json, _) = aomsim(dir.path(), &["chaos-test", "--input", input.to_str().unwrap()]);
    assert!(ok, "{json}");
    assert_eq!(json["summary"]["phase"], "Regular");
    let summary = std::fs::read_to_string(dir.path().join("chaos_summary.csv")).unwrap();
    assert!(summary.starts_with("r_value,k_median,phase\n"));
    assert!(summary.trim_end().ends_with(",Regular"));
    let per_nu = std::fs::read_to_string(dir.path().join("chaos_per_nu.csv")).unwrap();
    assert_eq!(per_nu.lines().count(), 17);
}

#[test]
fn errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let (ok, json, stderr) = aomsim(dir.path(), &["evolve", "--n-m", "0"]);
    assert!(!ok);
    assert_eq!(json["error"]["kind"], "invalid_param");
    assert!(json["error"]["message"].as_str().unwrap().contains("n_m"));
    assert!(stderr.contains("error:"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "g_acc = 2\n").unwrap();
    let (ok, json, _) = aomsim(dir.path(), &["evolve", "--config", cfg.to_str().unwrap()]);
    assert!(!ok);
    assert_eq!(json["error"]["kind"], "config");
    assert!(json["error"]["message"].as_str().unwrap().contains("g_acc"));
}

#[test]
fn env_overrides_file_and_flags_override_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "g_ac = -1\neta = 0.25\ng_mc = 0\nn_m = 2\nn_c = 3\nt_final = 2\n").unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_aomsim"));
        cmd.args(["evolve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        cmd.args(extra);
        match env {
            Some(v) => cmd.env("SIM_G_AC", v),
            None => cmd.env_remove("SIM_G_AC"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read_to_string(dir.path().join("config.toml")).unwrap()
    };
    assert!(run(&[], None).contains("g_ac = -1.0"));
    assert!(run(&[], Some("3")).contains("g_ac = 3.0"));
    assert!(run(&["--g-ac", "2"], Some("3")).contains("g_ac = 2.0"));
}

#[test]
fn trajectories_and_correlations_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (ok, json, _) = aomsim(
        dir.path(),
        &["trajectories", "--n-m", "2", "--n-c", "3", "--t-final", "0.5", "--n-traj", "8", "--initial-fock", "010"],
    );
    assert!(ok, "{json}");
    let csv = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert!(csv.starts_with("t,n_m,n_c,n_a,x_m,p_m,corr,x,p,trunc_flag,sem_n_m,sem_n_c,sem_n_a,sem_x_m,sem_p_m,sem_corr\n"));

    let (ok, json, _) = aomsim(
        dir.path(),
        &[
            "correlations", "--n-m", "2", "--n-c", "6", "--g-ac", "0", "--g-mc", "0", "--eta", "0.5",
            "--t-ref", "1", "--tau-max", "1", "--tau-points", "5",
        ],
    );
    assert!(ok, "{json}");
    let csv = std::fs::read_to_string(dir.path().join("correlations.csv")).unwrap();
    assert!(csv.starts_with("tau,re_g1,im_g1,g2\n"));
    assert_eq!(csv.lines().count(), 6);
    assert!((json["summary"]["g1_0"][0].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn phase_diagram_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (ok, json, _) = aomsim(
        dir.path(),
        &[
            "phase-diagram", "--sweep-n-m", "2", "--sweep-n-c", "3", "--t-final", "210", "--dt", "0.01",
            "--record-stride", "10", "--g-ac-start", "0", "--g-ac-stop", "1", "--g-ac-points", "2",
            "--g-mc-start", "0", "--g-mc-stop", "0", "--g-mc-points", "1",
        ],
    );
    assert!(ok, "{json}");
    assert_eq!(json["summary"]["cells"], 2);
    let d = load_diagram(&dir.path().join("phase_diagram.csv")).unwrap();
    assert_eq!(d.phase_map[0][0], CellPhase::Phase(Phase::Regular));
    let prov = d.provenance.expect("sidecar is present");
    assert_eq!((prov.params.n_m, prov.params.n_c), (2, 3));
    assert_eq!(prov.config_hash, json["summary"]["config_hash"].as_str().unwrap());
}
