//! Phase-diagram sweeps over the `(g_ac, g_mc)` plane.
//!
//! Every cell is an independent evolution followed by [`classify_phase`]. A
//! failed cell is recorded with the `ERR` label and never stops the sweep.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chaostest::{classify_phase, ChaosConfig, Phase};
use crate::dynamics::evolve_default;
use crate::error::{Result, SimError};
use crate::par;
use crate::params::SystemParams;

pub const CSV_HEADER: &str = "g_ac,g_mc,r_value,k_median,phase";

/// Label written for cells whose run failed.
pub const ERROR_LABEL: &str = "ERR";

/// Evenly spaced axis `start, …, stop` with `points` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(start: f64, stop: f64, points: usize) -> Self {
        GridAxis { start, stop, points }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 {
            return Err(SimError::InvalidInput("grid axis has no points".into()));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(SimError::InvalidInput("grid axis bounds must be finite".into()));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        if self.stop <= self.start {
            return Err(SimError::InvalidInput(format!(
                "grid axis must be increasing, got {} .. {}",
                self.start, self.stop
            )));
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|k| if k + 1 == self.points { self.stop } else { self.start + step * k as f64 })
            .collect())
    }
}

/// Sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub g_ac: GridAxis,
    pub g_mc: GridAxis,
    /// Truncation `(n_m, n_c)` used for every cell; `None` keeps the base one.
    pub downshift: Option<(usize, usize)>,
    pub chaos: ChaosConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            g_ac: GridAxis::new(0.0, 4.0, 41),
            g_mc: GridAxis::new(0.0, 4.0, 41),
            downshift: Some((6, 12)),
            chaos: ChaosConfig::default(),
        }
    }
}

/// Classification outcome of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellPhase {
    Phase(Phase),
    Error,
}

impl CellPhase {
    pub fn label(&self) -> &'static str {
        match self {
            CellPhase::Phase(p) => p.label(),
            CellPhase::Error => ERROR_LABEL,
        }
    }

    pub fn phase(&self) -> Option<Phase> {
        match self {
            CellPhase::Phase(p) => Some(*p),
            CellPhase::Error => None,
        }
    }
}

impl FromStr for CellPhase {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == ERROR_LABEL {
            Ok(CellPhase::Error)
        } else {
            Phase::from_str(s).map(CellPhase::Phase)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub g_ac: f64,
    pub g_mc: f64,
    pub kind: String,
    pub message: String,
}

/// Everything needed to rerun a diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Base parameters after the truncation downshift.
    pub params: SystemParams,
    pub sweep: SweepConfig,
    /// SHA-256 of the canonical JSON of `params` and `sweep`.
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_s: f64,
    /// Cells whose run crossed the truncation warning level, as `(g_ac, g_mc)`.
    pub truncation_warnings: Vec<(f64, f64)>,
    pub errors: Vec<CellError>,
}

/// Phase diagram. Maps are indexed `[i_ac][i_mc]`; error cells hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub g_ac_axis: Vec<f64>,
    pub g_mc_axis: Vec<f64>,
    pub r_map: Vec<Vec<Option<f64>>>,
    pub k_map: Vec<Vec<Option<f64>>>,
    pub phase_map: Vec<Vec<CellPhase>>,
    pub provenance: Option<Provenance>,
}

impl PhaseDiagram {
    pub fn cell(&self, i_ac: usize, i_mc: usize) -> (Option<f64>, Option<f64>, CellPhase) {
        (self.r_map[i_ac][i_mc], self.k_map[i_ac][i_mc], self.phase_map[i_ac][i_mc])
    }

    /// True when the maps and axes agree bit for bit, ignoring provenance.
    pub fn same_maps(&self, other: &PhaseDiagram) -> bool {
        fn bits(m: &[Vec<Option<f64>>]) -> Vec<Option<u64>> {
            m.iter().flatten().map(|v| v.map(f64::to_bits)).collect()
        }
        let axes = |d: &PhaseDiagram| {
            (
                d.g_ac_axis.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                d.g_mc_axis.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        };
        axes(self) == axes(other)
            && bits(&self.r_map) == bits(&other.r_map)
            && bits(&self.k_map) == bits(&other.k_map)
            && self.phase_map == other.phase_map
    }
}

/// Hex SHA-256 of the canonical JSON of a base parameter set and sweep config.
pub fn config_hash(params: &SystemParams, sweep: &SweepConfig) -> Result<String> {
    let canon = serde_json::to_vec(&(params, sweep))?;
    let digest = Sha256::digest(&canon);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

struct CellResult {
    r: Option<f64>,
    k: Option<f64>,
    phase: CellPhase,
    truncated: bool,
    error: Option<(String, String)>,
}

fn run_cell(base: &SystemParams, chaos: &ChaosConfig, g_ac: f64, g_mc: f64) -> CellResult {
    let params = base.clone().with_couplings(g_ac, g_mc);
    let outcome = evolve_default(&params).and_then(|series| {
        let truncated = series.any_truncation_warning();
        classify_phase(&series, chaos).map(|c| (c, truncated))
    });
    match outcome {
        Ok((c, truncated)) => CellResult {
            r: Some(c.r_value()),
            k: Some(c.k_median()),
            phase: CellPhase::Phase(c.phase),
            truncated,
            error: None,
        },
        Err(e) => CellResult {
            r: None,
            k: None,
            phase: CellPhase::Error,
            truncated: false,
            error: Some((e.kind().to_string(), e.to_string())),
        },
    }
}

/// Runs every cell of the grid with at most `workers` threads (0 = default).
pub fn run_sweep(base: &SystemParams, sweep: &SweepConfig, workers: usize) -> Result<PhaseDiagram> {
    let started = Instant::now();
    let mut params = base.clone();
    if let Some((n_m, n_c)) = sweep.downshift {
        params.n_m = n_m;
        params.n_c = n_c;
    }
    params.validate()?;
    let g_ac_axis = sweep.g_ac.values()?;
    let g_mc_axis = sweep.g_mc.values()?;
    let cells: Vec<(f64, f64)> =
        g_ac_axis.iter().flat_map(|&a| g_mc_axis.iter().map(move |&m| (a, m))).collect();

    let results = par::with_workers(workers, || {
        par::map(&cells, |&(g_ac, g_mc)| run_cell(&params, &sweep.chaos, g_ac, g_mc))
    });

    let n_mc = g_mc_axis.len();
    let mut r_map = vec![vec![None; n_mc]; g_ac_axis.len()];
    let mut k_map = r_map.clone();
    let mut phase_map = vec![vec![CellPhase::Error; n_mc]; g_ac_axis.len()];
    let mut truncation_warnings = Vec::new();
    let mut errors = Vec::new();
    for (idx, (res, &(g_ac, g_mc))) in results.into_iter().zip(&cells).enumerate() {
        let (i, j) = (idx / n_mc, idx % n_mc);
        r_map[i][j] = res.r;
        k_map[i][j] = res.k;
        phase_map[i][j] = res.phase;
        if res.truncated {
            truncation_warnings.push((g_ac, g_mc));
        }
        if let Some((kind, message)) = res.error {
            errors.push(CellError { g_ac, g_mc, kind, message });
        }
    }
    let provenance = Provenance {
        config_hash: config_hash(&params, sweep)?,
        seed: params.seed,
        params,
        sweep: sweep.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
        truncation_warnings,
        errors,
    };
    Ok(PhaseDiagram { g_ac_axis, g_mc_axis, r_map, k_map, phase_map, provenance: Some(provenance) })
}

/// `phase_diagram.csv` → `phase_diagram.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("phase_diagram");
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the long-form CSV and, when present, the provenance sidecar.
pub fn save_diagram(diagram: &PhaseDiagram, path: &Path) -> Result<()> {
    if diagram.g_ac_axis.is_empty() || diagram.g_mc_axis.is_empty() {
        return Err(SimError::InvalidInput("refusing to save an empty phase diagram".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for (i, g_ac) in diagram.g_ac_axis.iter().enumerate() {
        for (j, g_mc) in diagram.g_mc_axis.iter().enumerate() {
            let (r, k, phase) = diagram.cell(i, j);
            writeln!(w, "{g_ac},{g_mc},{},{},{}", fmt_opt(r), fmt_opt(k), phase.label())?;
        }
    }
    w.flush()?;
    if let Some(prov) = &diagram.provenance {
        let file = File::create(meta_path(path))?;
        serde_json::to_writer_pretty(BufWriter::new(file), prov)?;
    }
    Ok(())
}

/// Reads a diagram written by [`save_diagram`]. The sidecar is optional.
pub fn load_diagram(path: &Path) -> Result<PhaseDiagram> {
    let shown = path.display().to_string();
    let malformed = |row: usize, column: usize, reason: String| SimError::Malformed {
        path: shown.clone(),
        row,
        column,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path).map_err(
        |e| match e.into_kind() {
            csv::ErrorKind::Io(io) => SimError::Io(io),
            other => malformed(1, 1, format!("{other:?}")),
        },
    )?;

    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| malformed(row, 1, e.to_string()))?;
        if row == 1 {
            let header: Vec<&str> = record.iter().collect();
            let expected: Vec<&str> = CSV_HEADER.split(',').collect();
            if header != expected {
                let column = header
                    .iter()
                    .zip(&expected)
                    .position(|(a, b)| a.trim() != *b)
                    .unwrap_or(header.len().min(expected.len()))
                    + 1;
                return Err(malformed(row, column, format!("expected header `{CSV_HEADER}`")));
            }
            continue;
        }
        if record.len() != 5 {
            return Err(malformed(row, record.len().min(5) + 1, format!("expected 5 fields, found {}", record.len())));
        }
        let num = |col: usize| -> Result<f64> {
            let s = record[col].trim();
            s.parse::<f64>().map_err(|_| malformed(row, col + 1, format!("`{s}` is not a number")))
        };
        let opt = |col: usize| -> Result<Option<f64>> {
            if record[col].trim().is_empty() {
                Ok(None)
            } else {
                num(col).map(Some)
            }
        };
        let phase = CellPhase::from_str(&record[4]).map_err(|e| malformed(row, 5, e.to_string()))?;
        let (r, k) = (opt(2)?, opt(3)?);
        if phase != CellPhase::Error && (r.is_none() || k.is_none()) {
            return Err(malformed(row, if r.is_none() { 3 } else { 4 }, "missing value for a classified cell".into()));
        }
        rows.push((row, num(0)?, num(1)?, r, k, phase));
    }
    if rows.is_empty() {
        return Err(malformed(2, 1, "phase diagram has no cells".into()));
    }

    let mut g_ac_axis: Vec<f64> = Vec::new();
    let mut g_mc_axis: Vec<f64> = Vec::new();
    for &(_, a, m, ..) in &rows {
        if !g_ac_axis.iter().any(|v| v.to_bits() == a.to_bits()) {
            g_ac_axis.push(a);
        }
        if !g_mc_axis.iter().any(|v| v.to_bits() == m.to_bits()) {
            g_mc_axis.push(m);
        }
    }
    let n_mc = g_mc_axis.len();
    if rows.len() != g_ac_axis.len() * n_mc {
        return Err(malformed(
            rows.len() + 1,
            1,
            format!("{} cells do not fill a {}x{} grid", rows.len(), g_ac_axis.len(), n_mc),
        ));
    }
    let mut r_map = vec![vec![None; n_mc]; g_ac_axis.len()];
    let mut k_map = r_map.clone();
    let mut phase_map = vec![vec![CellPhase::Error; n_mc]; g_ac_axis.len()];
    for (idx, &(row, a, m, r, k, phase)) in rows.iter().enumerate() {
        let (i, j) = (idx / n_mc, idx % n_mc);
        if g_ac_axis[i].to_bits() != a.to_bits() {
            return Err(malformed(row, 1, format!("expected g_ac = {} in row-major order", g_ac_axis[i])));
        }
        if g_mc_axis[j].to_bits() != m.to_bits() {
            return Err(malformed(row, 2, format!("expected g_mc = {} in row-major order", g_mc_axis[j])));
        }
        r_map[i][j] = r;
        k_map[i][j] = k;
        phase_map[i][j] = phase;
    }

    let meta = meta_path(path);
    let provenance = if meta.exists() {
        Some(serde_json::from_reader(BufReader::new(File::open(meta)?))?)
    } else {
        None
    };
    Ok(PhaseDiagram { g_ac_axis, g_mc_axis, r_map, k_map, phase_map, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PhaseDiagram {
        PhaseDiagram {
            g_ac_axis: vec![0.0, 0.1 + 0.2],
            g_mc_axis: vec![1.0, 2.5],
            r_map: vec![vec![Some(1e-17), Some(0.3)], vec![Some(2.0 / 3.0), None]],
            k_map: vec![vec![Some(-0.01), Some(0.2)], vec![Some(0.93), None]],
            phase_map: vec![
                vec![CellPhase::Phase(Phase::Regular), CellPhase::Phase(Phase::TimeCrystal)],
                vec![CellPhase::Phase(Phase::Chaotic), CellPhase::Error],
            ],
            provenance: None,
        }
    }

    #[test]
    fn axis_values() {
        assert_eq!(GridAxis::new(0.0, 4.0, 9).values().unwrap()[8], 4.0);
        assert_eq!(GridAxis::new(0.0, 4.0, 9).values().unwrap()[2], 1.0);
        assert_eq!(GridAxis::new(2.0, 2.0, 1).values().unwrap(), vec![2.0]);
        assert!(GridAxis::new(0.0, 1.0, 0).values().is_err());
        assert!(GridAxis::new(1.0, 0.0, 3).values().is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phase_diagram.csv");
        let d = tiny();
        save_diagram(&d, &path).unwrap();
        let back = load_diagram(&path).unwrap();
        assert!(d.same_maps(&back));
        assert_eq!(d, back);
    }

    #[test]
    fn hand_written_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(
            &path,
            "g_ac,g_mc,r_value,k_median,phase\n0,0,0,0.01,I\n0,1,0.5,0.2,II\n1,0,0.7,0.9,III\n1,1,,,ERR\n",
        )
        .unwrap();
        let d = load_diagram(&path).unwrap();
        assert_eq!(d.g_ac_axis, vec![0.0, 1.0]);
        assert_eq!(d.g_mc_axis, vec![0.0, 1.0]);
        assert_eq!(d.phase_map[1][0], CellPhase::Phase(Phase::Chaotic));
        assert_eq!(d.r_map[0][1], Some(0.5));
        assert_eq!(d.phase_map[1][1], CellPhase::Error);
        assert!(d.provenance.is_none());
    }

    #[test]
    fn malformed_rows_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "g_ac,g_mc,r_value,k_median,phase\n0,0,0,0.01,I\n0,1,zz,0.2,II\n").unwrap();
        match load_diagram(&path) {
            Err(SimError::Malformed { row, column, .. }) => assert_eq!((row, column), (3, 3)),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "g_ac,g_mc,r_value,k_median,phase\n0,0,0,0.01,IV\n").unwrap();
        match load_diagram(&path) {
            Err(SimError::Malformed { row, column, .. }) => assert_eq!((row, column), (2, 5)),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "g_ac,g_mc,r,k_median,phase\n").unwrap();
        match load_diagram(&path) {
            Err(SimError::Malformed { row, column, .. }) => assert_eq!((row, column), (1, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_grids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "g_ac,g_mc,r_value,k_median,phase\n").unwrap();
        assert!(matches!(load_diagram(&path), Err(SimError::Malformed { .. })));
        let empty = PhaseDiagram { g_ac_axis: vec![], g_mc_axis: vec![], ..tiny() };
        assert!(save_diagram(&empty, &path).is_err());
        let bad = SweepConfig { g_ac: GridAxis::new(0.0, 1.0, 0), ..SweepConfig::default() };
        assert!(run_sweep(&SystemParams::default(), &bad, 1).is_err());
    }

    #[test]
    fn failing_cells_do_not_abort() {
        let base = SystemParams { n_m: 2, n_c: 2, t_final: 3.0, record_stride: 20, ..SystemParams::default() };
        // 3 time units of samples are far too short for the 0-1 test.
        let sweep = SweepConfig {
            g_ac: GridAxis::new(0.0, 1.0, 2),
            g_mc: GridAxis::new(0.0, 0.0, 1),
            downshift: None,
            chaos: ChaosConfig::default(),
        };
        let d = run_sweep(&base, &sweep, 1).unwrap();
        assert!(d.phase_map.iter().flatten().all(|p| *p == CellPhase::Error));
        let prov = d.provenance.unwrap();
        assert_eq!(prov.errors.len(), 2);
        assert_eq!(prov.errors[0].kind, "series_too_short");
        assert_eq!(prov.config_hash.len(), 64);
    }

    #[test]
    fn hash_tracks_config() {
        let p = SystemParams::default();
        let s = SweepConfig::default();
        let h = config_hash(&p, &s).unwrap();
        assert_eq!(h, config_hash(&p, &s).unwrap());
        assert_ne!(h, config_hash(&p.with_couplings(1.0, 1.0), &s).unwrap());
    }
}
