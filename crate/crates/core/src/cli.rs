//! Command-line front end: layered configuration and subcommand dispatch.
//!
//! Values are resolved as defaults < TOML file < `SIM_<KEY>` environment
//! variables < `--key` flags. Every key is flat; unknown keys are errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;
use std::str::FromStr;

use clap::{Arg, ArgAction, ArgMatches, Command};
use serde::{Deserialize, Serialize};

use crate::chaostest::{classify_phase, ChaosConfig, NuPolicy, ThetaUpdate};
use crate::correlations::{correlations_from, default_tau_grid, SideDrive, Want};
use crate::dynamics::{evolve_with, EvolveOptions, HybridState, ObservableSeries};
use crate::error::{Result, SimError};
use crate::operators::{build_operators, FockLabel};
use crate::params::SystemParams;
use crate::sweep::{run_sweep, save_diagram, GridAxis, SweepConfig};
use crate::trajectories::{qt_ensemble, InitialCondition, NoJumpPropagator, QtConfig};
use crate::validation::run_oracles;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Str,
    /// Float that may be left unset.
    OptFloat,
}

/// Every configuration key with its type. Physical keys first, then options.
pub const KEYS: &[(&str, Kind)] = &[
    ("omega_m", Kind::Float),
    ("delta_c", Kind::Float),
    ("delta_a", Kind::Float),
    ("eta", Kind::Float),
    ("g_mc", Kind::Float),
    ("g_ac", Kind::Float),
    ("gamma_m", Kind::Float),
    ("gamma_c", Kind::Float),
    ("gamma_a", Kind::Float),
    ("v0", Kind::Float),
    ("v1", Kind::Float),
    ("omega_r", Kind::Float),
    ("n_m", Kind::Int),
    ("n_c", Kind::Int),
    ("dt", Kind::Float),
    ("t_final", Kind::Float),
    ("record_stride", Kind::Int),
    ("x0", Kind::Float),
    ("p0", Kind::Float),
    ("seed", Kind::Int),
    ("initial_fock", Kind::Str),
    ("workers", Kind::Int),
    ("out", Kind::Str),
    ("n_traj", Kind::Int),
    ("substeps", Kind::Int),
    ("propagator", Kind::Str),
    ("t_ref", Kind::Float),
    ("tau_max", Kind::Float),
    ("tau_points", Kind::Int),
    ("side_drive", Kind::Str),
    ("g_ac_start", Kind::Float),
    ("g_ac_stop", Kind::Float),
    ("g_ac_points", Kind::Int),
    ("g_mc_start", Kind::Float),
    ("g_mc_stop", Kind::Float),
    ("g_mc_points", Kind::Int),
    ("sweep_n_m", Kind::Int),
    ("sweep_n_c", Kind::Int),
    ("nu_mode", Kind::Str),
    ("nu", Kind::Float),
    ("nu_draws", Kind::Int),
    ("nu_lo", Kind::Float),
    ("nu_hi", Kind::Float),
    ("theta_update", Kind::Str),
    ("sample_interval", Kind::Float),
    ("transient_fraction", Kind::Float),
    ("n_cut_fraction", Kind::Float),
    ("k_threshold", Kind::Float),
    ("regular_window", Kind::Float),
    ("epsilon", Kind::OptFloat),
    ("regular_observable", Kind::Str),
];

/// Options beyond the physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Initial Fock product `|n_m n_c n_a⟩`.
    pub initial_fock: String,
    pub workers: usize,
    pub out: String,
    pub n_traj: usize,
    pub substeps: usize,
    pub propagator: String,
    pub t_ref: f64,
    pub tau_max: f64,
    pub tau_points: usize,
    pub side_drive: String,
    pub g_ac_start: f64,
    pub g_ac_stop: f64,
    pub g_ac_points: usize,
    pub g_mc_start: f64,
    pub g_mc_stop: f64,
    pub g_mc_points: usize,
    /// Sweep truncation; `0` keeps the base truncation.
    pub sweep_n_m: usize,
    pub sweep_n_c: usize,
    /// `median` or `single`.
    pub nu_mode: String,
    pub nu: f64,
    pub nu_draws: usize,
    pub nu_lo: f64,
    pub nu_hi: f64,
    /// `phase` or `classic`.
    pub theta_update: String,
    pub sample_interval: f64,
    pub transient_fraction: f64,
    pub n_cut_fraction: f64,
    pub k_threshold: f64,
    pub regular_window: f64,
    pub epsilon: Option<f64>,
    pub regular_observable: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        let chaos = ChaosConfig::default();
        let (nu_draws, nu_lo, nu_hi) = match chaos.nu_policy {
            NuPolicy::Median { draws, lo, hi } => (draws, lo, hi),
            NuPolicy::Single { .. } => unreachable!("default policy is the median"),
        };
        RunOptions {
            initial_fock: "000".into(),
            workers: 0,
            out: "out".into(),
            n_traj: 1000,
            substeps: 5,
            propagator: "rk4".into(),
            t_ref: 100.0,
            tau_max: 50.0,
            tau_points: 400,
            side_drive: "self_consistent".into(),
            g_ac_start: 0.0,
            g_ac_stop: 4.0,
            g_ac_points: 41,
            g_mc_start: 0.0,
            g_mc_stop: 4.0,
            g_mc_points: 41,
            sweep_n_m: 6,
            sweep_n_c: 12,
            nu_mode: "median".into(),
            nu: 1.1,
            nu_draws,
            nu_lo,
            nu_hi,
            theta_update: "phase".into(),
            sample_interval: chaos.sample_interval,
            transient_fraction: chaos.transient_fraction,
            n_cut_fraction: chaos.n_cut_fraction,
            k_threshold: chaos.k_threshold,
            regular_window: chaos.regular_window,
            epsilon: chaos.epsilon,
            regular_observable: chaos.regular_observable,
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub options: RunOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { params: SystemParams::default(), options: RunOptions::default() }
    }
}

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

fn is_param_key(key: &str) -> bool {
    KEYS.iter().position(|(k, _)| *k == key).is_some_and(|i| i < 20)
}

fn type_error(key: &str, expected: &str, got: &toml::Value) -> SimError {
    SimError::Config { key: key.into(), reason: format!("expected {expected}, got `{got}`") }
}

/// Checks a value against its key's type, widening integers to floats.
fn coerce(key: &str, value: toml::Value) -> Result<toml::Value> {
    let kind = kind_of(key).ok_or_else(|| SimError::Config { key: key.into(), reason: "unknown key".into() })?;
    match (kind, value) {
        (Kind::Float | Kind::OptFloat, toml::Value::Integer(i)) => Ok(toml::Value::Float(i as f64)),
        (Kind::Float | Kind::OptFloat, v @ toml::Value::Float(_)) => Ok(v),
        (Kind::Float | Kind::OptFloat, v) => Err(type_error(key, "a number", &v)),
        (Kind::Int, toml::Value::Integer(i)) if i >= 0 => Ok(toml::Value::Integer(i)),
        (Kind::Int, v) => Err(type_error(key, "a non-negative integer", &v)),
        (Kind::Str, v @ toml::Value::String(_)) => Ok(v),
        (Kind::Str, v) => Err(type_error(key, "a string", &v)),
    }
}

/// Parses a flag or environment string as the key's type.
fn parse_text(key: &str, text: &str) -> Result<toml::Value> {
    let kind = kind_of(key).ok_or_else(|| SimError::Config { key: key.into(), reason: "unknown key".into() })?;
    let text = text.trim();
    let bad = |expected: &str| SimError::Config { key: key.into(), reason: format!("expected {expected}, got `{text}`") };
    match kind {
        Kind::Float | Kind::OptFloat => text.parse::<f64>().map(toml::Value::Float).map_err(|_| bad("a number")),
        Kind::Int => text.parse::<u64>().map(|v| toml::Value::Integer(v as i64)).map_err(|_| bad("a non-negative integer")),
        Kind::Str => Ok(toml::Value::String(text.to_string())),
    }
}

/// Layered key-value overrides before deserialisation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layers {
    values: BTreeMap<String, toml::Value>,
}

impl Layers {
    /// Adds every key of a TOML document.
    pub fn apply_toml(&mut self, text: &str, origin: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| SimError::Config { key: origin.into(), reason: e.to_string() })?;
        for (key, value) in table {
            let v = coerce(&key, value)?;
            self.values.insert(key, v);
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Config {
            key: path.display().to_string(),
            reason: format!("cannot read config file: {e}"),
        })?;
        self.apply_toml(&text, &path.display().to_string())
    }

    /// Adds `SIM_<KEY>` variables found through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for (key, _) in KEYS {
            if let Some(text) = lookup(&format!("SIM_{}", key.to_uppercase())) {
                self.values.insert(key.to_string(), parse_text(key, &text)?);
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, text: &str) -> Result<()> {
        self.values.insert(key.to_string(), parse_text(key, text)?);
        Ok(())
    }

    /// Deserialises and validates the merged layers.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut params = toml::Table::new();
        let mut options = toml::Table::new();
        for (k, v) in &self.values {
            if is_param_key(k) {
                params.insert(k.clone(), v.clone());
            } else {
                options.insert(k.clone(), v.clone());
            }
        }
        let de = |e: toml::de::Error| SimError::Config { key: "config".into(), reason: e.to_string() };
        let params: SystemParams = toml::Value::Table(params).try_into().map_err(de)?;
        let options: RunOptions = toml::Value::Table(options).try_into().map_err(de)?;
        params.validate()?;
        let cfg = RunConfig { params, options };
        cfg.chaos_config()?;
        cfg.propagator()?;
        cfg.side_drive()?;
        cfg.initial_label()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn chaos_config(&self) -> Result<ChaosConfig> {
        let o = &self.options;
        let nu_policy = match o.nu_mode.as_str() {
            "median" => NuPolicy::Median { draws: o.nu_draws, lo: o.nu_lo, hi: o.nu_hi },
            "single" => NuPolicy::Single { nu: o.nu },
            other => {
                return Err(SimError::Config { key: "nu_mode".into(), reason: format!("expected `median` or `single`, got `{other}`") })
            }
        };
        nu_policy.angles(0).map_err(|e| SimError::Config { key: "nu".into(), reason: e.to_string() })?;
        let theta_update = match o.theta_update.as_str() {
            "phase" => ThetaUpdate::Phase,
            "classic" => ThetaUpdate::Classic,
            other => {
                return Err(SimError::Config {
                    key: "theta_update".into(),
                    reason: format!("expected `phase` or `classic`, got `{other}`"),
                })
            }
        };
        let fraction = |key: &str, v: f64, open_low: bool| {
            let ok = if open_low { v > 0.0 && v <= 1.0 } else { (0.0..1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                Err(SimError::Config { key: key.into(), reason: format!("fraction out of range: {v}") })
            }
        };
        fraction("transient_fraction", o.transient_fraction, false)?;
        fraction("n_cut_fraction", o.n_cut_fraction, true)?;
        fraction("regular_window", o.regular_window, true)?;
        if !(o.sample_interval > 0.0) {
            return Err(SimError::Config { key: "sample_interval".into(), reason: "must be > 0".into() });
        }
        if !matches!(o.regular_observable.as_str(), "n_m" | "n_c" | "n_a") {
            return Err(SimError::Config {
                key: "regular_observable".into(),
                reason: format!("expected n_m, n_c or n_a, got `{}`", o.regular_observable),
            });
        }
        Ok(ChaosConfig {
            nu_policy,
            theta_update,
            sample_interval: o.sample_interval,
            transient_fraction: o.transient_fraction,
            n_cut_fraction: o.n_cut_fraction,
            k_threshold: o.k_threshold,
            regular_window: o.regular_window,
            epsilon: o.epsilon,
            regular_observable: o.regular_observable.clone(),
            seed: self.params.seed,
        })
    }

    pub fn propagator(&self) -> Result<NoJumpPropagator> {
        match self.options.propagator.as_str() {
            "rk4" => Ok(NoJumpPropagator::Rk4),
            "euler" => Ok(NoJumpPropagator::Euler),
            other => Err(SimError::Config { key: "propagator".into(), reason: format!("expected `rk4` or `euler`, got `{other}`") }),
        }
    }

    pub fn side_drive(&self) -> Result<SideDrive> {
        SideDrive::from_str(&self.options.side_drive)
            .map_err(|e| SimError::Config { key: "side_drive".into(), reason: e.to_string() })
    }

    pub fn initial_label(&self) -> Result<FockLabel> {
        FockLabel::parse(&self.options.initial_fock)
            .map_err(|e| SimError::Config { key: "initial_fock".into(), reason: e.to_string() })
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let o = &self.options;
        Ok(SweepConfig {
            g_ac: GridAxis::new(o.g_ac_start, o.g_ac_stop, o.g_ac_points),
            g_mc: GridAxis::new(o.g_mc_start, o.g_mc_stop, o.g_mc_points),
            downshift: if o.sweep_n_m == 0 || o.sweep_n_c == 0 { None } else { Some((o.sweep_n_m, o.sweep_n_c)) },
            chaos: self.chaos_config()?,
        })
    }

    /// The resolved configuration as a flat TOML document.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(&self.params).expect("parameters serialise");
        let options = toml::Table::try_from(&self.options).expect("options serialise");
        table.extend(options);
        toml::to_string(&table).expect("flat table serialises")
    }
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// The clap command tree. Every config key is a global `--key-name` flag.
pub fn command() -> Command {
    let mut cmd = Command::new("aomsim")
        .about("Hybrid atom-optomechanics simulator")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .global(true)
                .value_name("FILE")
                .help("TOML file with flat key = value settings"),
        );
    for (key, _) in KEYS {
        cmd = cmd.arg(Arg::new(*key).long(flag_name(key)).global(true).value_name("VALUE").action(ArgAction::Set));
    }
    cmd.subcommand(Command::new("evolve").about("Master-equation evolution; writes observables.csv"))
        .subcommand(Command::new("trajectories").about("Quantum-trajectory ensemble; writes trajectories.csv"))
        .subcommand(Command::new("correlations").about("Cavity g1 and g2; writes correlations.csv"))
        .subcommand(
            Command::new("chaos-test")
                .about("Regular test and 0-1 test of one run; writes chaos_summary.csv and chaos_per_nu.csv")
                .arg(
                    Arg::new("input")
                        .long("input")
                        .value_name("CSV")
                        .help("Classify an existing observables.csv instead of evolving"),
                ),
        )
        .subcommand(Command::new("phase-diagram").about("Grid sweep; writes phase_diagram.csv and its .meta.json"))
        .subcommand(Command::new("validate").about("Runs the analytic oracle suite; writes validation.json"))
}

/// Resolves the configuration from parsed arguments and an environment.
pub fn resolve(matches: &ArgMatches, env: impl Fn(&str) -> Option<String>) -> Result<RunConfig> {
    let mut layers = Layers::default();
    if let Some(path) = matches.get_one::<String>("config") {
        layers.apply_file(Path::new(path))?;
    }
    layers.apply_env(env)?;
    for (key, _) in KEYS {
        if let Some(v) = matches.get_one::<String>(key) {
            layers.set(key, v)?;
        }
    }
    layers.resolve()
}

/// What a successful subcommand produced.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: String,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
    pub success: bool,
}

fn write_config(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml())?;
    Ok(path)
}

fn write_series(series: &ObservableSeries, path: &Path) -> Result<()> {
    series.write_csv(BufWriter::new(fs::File::create(path)?))
}

fn evolve_run(cfg: &RunConfig) -> Result<ObservableSeries> {
    let ops = build_operators(&cfg.params)?;
    let init = HybridState::from_fock(&ops, cfg.initial_label()?, cfg.params.x0, cfg.params.p0)?;
    Ok(evolve_with(&cfg.params, &ops, &init, EvolveOptions::default())?.series)
}

/// Runs one subcommand against a resolved configuration.
pub fn dispatch(name: &str, sub: &ArgMatches, cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let dir = PathBuf::from(&cfg.options.out);
    fs::create_dir_all(&dir)?;
    let mut files = vec![write_config(cfg, &dir)?];
    let workers = cfg.options.workers;
    let mut success = true;

    let summary = match name {
        "evolve" => {
            let series = crate::par::with_workers(workers, || evolve_run(cfg))?;
            let path = dir.join("observables.csv");
            write_series(&series, &path)?;
            files.push(path);
            let chaos = cfg.chaos_config()?;
            let reg = crate::chaostest::regular_test(&series, chaos.regular_window, chaos.epsilon, &chaos.regular_observable)?;
            serde_json::json!({
                "samples": series.len(),
                "truncation_warning": series.any_truncation_warning(),
                "r_value": reg.r_value,
                "epsilon": reg.epsilon,
                "regular": reg.regular,
            })
        }
        "trajectories" => {
            let qt = QtConfig {
                n_traj: cfg.options.n_traj,
                substeps: cfg.options.substeps,
                propagator: cfg.propagator()?,
                initial: InitialCondition::Fock(cfg.initial_label()?),
            };
            let out = crate::par::with_workers(workers, || qt_ensemble(&cfg.params, &qt))?;
            let path = dir.join("trajectories.csv");
            out.write_csv(BufWriter::new(fs::File::create(&path)?))?;
            files.push(path);
            serde_json::json!({
                "samples": out.mean.len(),
                "n_traj": out.n_traj,
                "jumps": { "membrane": out.jump_counts[0], "cavity": out.jump_counts[1], "atom": out.jump_counts[2] },
            })
        }
        "correlations" => {
            let ops = build_operators(&cfg.params)?;
            let init = HybridState::from_fock(&ops, cfg.initial_label()?, cfg.params.x0, cfg.params.p0)?;
            let tau = default_tau_grid(cfg.options.tau_max, cfg.options.tau_points);
            let drive = cfg.side_drive()?;
            let out = crate::par::with_workers(workers, || {
                correlations_from(&cfg.params, &ops, &init, cfg.options.t_ref, &tau, Want { g1: true, g2: true }, drive)
            })?;
            let path = dir.join("correlations.csv");
            out.write_csv(BufWriter::new(fs::File::create(&path)?))?;
            files.push(path);
            let half = 0.5 * cfg.options.tau_max;
            serde_json::json!({
                "t_ref": out.t_ref,
                "side_drive": out.drive.name(),
                "g1_0": [out.g1[0].re, out.g1[0].im],
                "g2_0": out.g2[0],
                "g2_crossings_last_half": out.g2_crossings(half, cfg.options.tau_max),
            })
        }
        "chaos-test" => {
            let series = match sub.get_one::<String>("input") {
                Some(path) => ObservableSeries::read_csv(std::io::BufReader::new(fs::File::open(path)?), path)?,
                None => {
                    let s = crate::par::with_workers(workers, || evolve_run(cfg))?;
                    let path = dir.join("observables.csv");
                    write_series(&s, &path)?;
                    files.push(path);
                    s
                }
            };
            let c = crate::par::with_workers(workers, || classify_phase(&series, &cfg.chaos_config()?))?;
            let summary_path = dir.join("chaos_summary.csv");
            fs::write(&summary_path, c.summary_csv())?;
            let per_nu_path = dir.join("chaos_per_nu.csv");
            fs::write(&per_nu_path, c.per_nu_csv())?;
            files.push(summary_path);
            files.push(per_nu_path);
            serde_json::json!({
                "phase": c.phase.name(),
                "label": c.phase.label(),
                "r_value": c.r_value(),
                "epsilon": c.regular.epsilon,
                "k_median": c.k_median(),
                "k_regression_median": c.zero_one.k_regression_median,
            })
        }
        "phase-diagram" => {
            let sweep = cfg.sweep_config()?;
            let d = run_sweep(&cfg.params, &sweep, workers)?;
            let path = dir.join("phase_diagram.csv");
            save_diagram(&d, &path)?;
            files.push(path.clone());
            files.push(crate::sweep::meta_path(&path));
            let prov = d.provenance.as_ref().expect("fresh sweeps carry provenance");
            let mut counts = BTreeMap::new();
            for p in d.phase_map.iter().flatten() {
                *counts.entry(p.label()).or_insert(0usize) += 1;
            }
            serde_json::json!({
                "cells": d.g_ac_axis.len() * d.g_mc_axis.len(),
                "counts": counts,
                "errors": prov.errors.len(),
                "truncation_warnings": prov.truncation_warnings.len(),
                "config_hash": prov.config_hash,
            })
        }
        "validate" => {
            let reports = crate::par::with_workers(workers, run_oracles)?;
            let path = dir.join("validation.json");
            fs::write(&path, serde_json::to_string_pretty(&reports)?)?;
            files.push(path);
            for r in &reports {
                eprintln!("{} {} (observed {:.3e}, tolerance {:.1e}): {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.observed, r.tolerance, r.detail);
            }
            success = reports.iter().all(|r| r.passed);
            serde_json::json!({
                "passed": reports.iter().filter(|r| r.passed).count(),
                "failed": reports.iter().filter(|r| !r.passed).count(),
            })
        }
        other => return Err(SimError::InvalidInput(format!("unknown subcommand `{other}`"))),
    };
    let mut summary = summary;
    summary["wall_time_s"] = serde_json::json!(started.elapsed().as_secs_f64());
    Ok(Outcome { command: name.to_string(), files, summary, success })
}

/// Machine-readable error document.
pub fn error_json(e: &SimError) -> serde_json::Value {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn key_table_matches_structs() {
        let params = toml::Table::try_from(SystemParams::default()).unwrap();
        let options = toml::Table::try_from(RunOptions { epsilon: Some(1.0), ..RunOptions::default() }).unwrap();
        let mut from_structs: Vec<&str> = params.keys().chain(options.keys()).map(String::as_str).collect();
        let mut listed: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
        assert_eq!(params.len(), 20);
        assert!(KEYS[..20].iter().all(|(k, _)| params.contains_key(*k)));
        from_structs.sort();
        listed.sort();
        assert_eq!(from_structs, listed);
    }

    #[test]
    fn empty_file_gives_defaults() {
        let mut l = Layers::default();
        l.apply_toml("", "empty").unwrap();
        let cfg = l.resolve().unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!((cfg.params.g_ac, cfg.params.g_mc, cfg.params.omega_m), (0.5, 2.0, 1.0));
        assert_eq!((cfg.params.gamma_c, cfg.params.gamma_m, cfg.params.eta), (0.5, 2.0, 5.0));
        assert_eq!((cfg.params.v0, cfg.params.v1, cfg.params.omega_r), (20.0, 40.0, 1.0));
        assert_eq!((cfg.params.delta_c, cfg.params.delta_a), (-1.0, -2.0));
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let m = command().try_get_matches_from(["aomsim", "evolve", "--g-ac", "2"]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "g_ac = -1\ng_mc = 3\neta = 1\n").unwrap();
        let m2 = command()
            .try_get_matches_from(["aomsim", "evolve", "--config", path.to_str().unwrap(), "--g-ac", "2"])
            .unwrap();
        let env = |k: &str| match k {
            "SIM_G_MC" => Some("1.5".to_string()),
            "SIM_G_AC" => Some("7".to_string()),
            _ => None,
        };
        let cfg = resolve(&m2, env).unwrap();
        assert_eq!(cfg.params.g_ac, 2.0);
        assert_eq!(cfg.params.g_mc, 1.5);
        assert_eq!(cfg.params.eta, 1.0);
        assert_eq!(resolve(&m, no_env).unwrap().params.g_ac, 2.0);
    }

    #[test]
    fn bad_values_name_their_key() {
        let mut l = Layers::default();
        l.apply_toml("n_m = 0", "f").unwrap();
        match l.resolve() {
            Err(SimError::InvalidParam { key, .. }) => assert_eq!(key, "n_m"),
            other => panic!("unexpected {other:?}"),
        }
        let mut l = Layers::default();
        match l.apply_toml("g_acc = 1", "f") {
            Err(SimError::Config { key, .. }) => assert_eq!(key, "g_acc"),
            other => panic!("unexpected {other:?}"),
        }
        match l.apply_toml("n_c = 2.5", "f") {
            Err(SimError::Config { key, reason }) => {
                assert_eq!(key, "n_c");
                assert!(reason.contains("integer"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match l.set("dt", "fast") {
            Err(SimError::Config { key, .. }) => assert_eq!(key, "dt"),
            other => panic!("unexpected {other:?}"),
        }
        let mut l = Layers::default();
        l.apply_toml("theta_update = \"sideways\"", "f").unwrap();
        assert!(matches!(l.resolve(), Err(SimError::Config { .. })));
        let mut l = Layers::default();
        assert!(matches!(l.apply_file(Path::new("/nonexistent/config.toml")), Err(SimError::Config { .. })));
    }

    #[test]
    fn resolved_toml_round_trips() {
        let mut l = Layers::default();
        l.apply_toml("g_ac = 2\nepsilon = 0.01\ninitial_fock = \"110\"", "f").unwrap();
        let cfg = l.resolve().unwrap();
        let mut again = Layers::default();
        again.apply_toml(&cfg.to_toml(), "round trip").unwrap();
        assert_eq!(again.resolve().unwrap(), cfg);
        assert_eq!(cfg.initial_label().unwrap(), FockLabel::new(1, 1, 0));
    }
}
