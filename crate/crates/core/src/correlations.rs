//! First- and second-order cavity correlation functions.
//!
//! `G¹(t, τ) = ⟨a†(t+τ) a(t)⟩` is obtained from four Hermitian helper states
//! `(1 ± a)ρ(1 ± a)†` and `(1 ± ia)ρ(1 ± ia)†`, whose weighted sum is `aρ`.
//! `g²` uses the photon-subtracted state `aρa†/⟨n_c⟩`. By default each side
//! state drives its own copy of the classical atom; [`SideDrive::Baseline`]
//! replays the unperturbed trajectory instead.

use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{hermitian_part, HybridIntegrator, HybridState, StageDrive};
use crate::error::{Result, SimError};
use crate::operators::{build_operators, CMatrix, OperatorSet};
use crate::par;
use crate::params::SystemParams;

/// Smallest `⟨n_c⟩` accepted as a normalisation.
pub const MIN_OCCUPATION: f64 = 1e-12;

pub const CSV_HEADER: &str = "tau,re_g1,im_g1,g2";

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub t_ref: f64,
    pub tau: Vec<f64>,
    pub g1: Vec<Complex64>,
    pub g2: Vec<f64>,
    pub drive: SideDrive,
}

impl CorrelationSeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for i in 0..self.tau.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.tau[i], self.g1[i].re, self.g1[i].im, self.g2[i]
            )?;
        }
        Ok(())
    }

    /// Sign changes of `g2 − 1` for samples with `lo ≤ τ ≤ hi`.
    pub fn g2_crossings(&self, lo: f64, hi: f64) -> usize {
        let window: Vec<f64> = self
            .tau
            .iter()
            .zip(&self.g2)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, g)| g - 1.0)
            .collect();
        sign_changes(&window)
    }
}

/// Number of strict sign flips, skipping exact zeros.
pub fn sign_changes(values: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in values {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// `points` lags spread evenly over `[0, tau_max]`.
pub fn default_tau_grid(tau_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|k| tau_max * k as f64 / (points - 1) as f64).collect(),
    }
}

/// Rounds lags to whole steps. Rejects negative, non-finite or decreasing grids.
fn tau_steps(tau: &[f64], dt: f64) -> Result<Vec<usize>> {
    if tau.is_empty() {
        return Err(SimError::InvalidInput("empty tau grid".into()));
    }
    let mut steps = Vec::with_capacity(tau.len());
    for &t in tau {
        if !t.is_finite() || t < 0.0 {
            return Err(SimError::InvalidInput(format!("tau must be finite and >= 0, got {t}")));
        }
        let s = (t / dt).round() as usize;
        if steps.last().is_some_and(|&prev| s < prev) {
            return Err(SimError::InvalidInput("tau grid must be non-decreasing".into()));
        }
        steps.push(s);
    }
    Ok(steps)
}

fn cavity_occupation(rho: &CMatrix, ops: &OperatorSet) -> f64 {
    ops.sparse.num_c.iter().enumerate().map(|(i, n)| n * rho[(i, i)].re).sum()
}

/// `Tr(a† ρ)`.
fn a_dagger_trace(rho: &CMatrix, ops: &OperatorSet) -> Complex64 {
    let a = &ops.sparse.a;
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, (&src, &amp)) in a.src.iter().zip(&a.amp).enumerate() {
        if amp != 0.0 {
            // (a†)_{src, i} = amp, so Tr(a†ρ) = Σ amp ρ_{i, src}.
            acc += rho[(i, src)] * amp;
        }
    }
    acc
}

/// `(1 + c a) ρ (1 + c a)†`.
fn helper(rho: &CMatrix, a: &CMatrix, c: Complex64) -> CMatrix {
    let dim = rho.nrows();
    let k = CMatrix::identity(dim, dim) + a * c;
    hermitian_part(&k * rho * k.adjoint())
}

/// Classical trajectory seen by the helper and photon-subtracted states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideDrive {
    /// Each side state carries its own copy of `(x, p)` from `t_ref` on and
    /// feeds its own `corr` back into the atom.
    #[default]
    SelfConsistent,
    /// Side states follow the Hamiltonian history of the unperturbed state.
    Baseline,
}

impl SideDrive {
    pub fn name(&self) -> &'static str {
        match self {
            SideDrive::SelfConsistent => "self_consistent",
            SideDrive::Baseline => "baseline",
        }
    }
}

impl FromStr for SideDrive {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "self_consistent" => Ok(SideDrive::SelfConsistent),
            "baseline" => Ok(SideDrive::Baseline),
            other => Err(SimError::InvalidInput(format!(
                "unknown side drive '{other}', expected self_consistent or baseline"
            ))),
        }
    }
}

/// Evolves a side state from the reference point, reporting `probe(ρ)` at each requested step.
fn side_evolution<T>(
    integ: &mut HybridIntegrator,
    mut state: HybridState,
    drive: SideDrive,
    drives: &[StageDrive],
    steps: &[usize],
    probe: impl Fn(&CMatrix) -> T,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(steps.len());
    let mut done = 0;
    for &target in steps {
        while done < target {
            match drive {
                SideDrive::Baseline => integ.step_driven(&mut state.rho, &drives[done]),
                SideDrive::SelfConsistent => {
                    integ.step(&mut state)?;
                }
            }
            done += 1;
        }
        out.push(probe(&state.rho));
    }
    Ok(out)
}

/// Which correlation functions to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Want {
    pub g1: bool,
    pub g2: bool,
}

/// Evolves from `initial` to `t_ref`, then computes the requested functions
/// on the lag grid `tau` (rounded to multiples of `params.dt`).
pub fn correlations_from(
    params: &SystemParams,
    ops: &OperatorSet,
    initial: &HybridState,
    t_ref: f64,
    tau: &[f64],
    want: Want,
    drive: SideDrive,
) -> Result<CorrelationSeries> {
    params.validate()?;
    if !t_ref.is_finite() || t_ref < 0.0 {
        return Err(SimError::InvalidInput(format!("t_ref must be finite and >= 0, got {t_ref}")));
    }
    let steps = tau_steps(tau, params.dt)?;
    let mut integ = HybridIntegrator::new(ops, params);
    let mut state = initial.clone();
    state.rho = hermitian_part(state.rho);
    let ref_steps = (t_ref / params.dt).round() as usize;
    for _ in 0..ref_steps {
        integ.step(&mut state)?;
    }
    let reference = state.clone();
    let t_ref = state.t;
    let rho_ref = &reference.rho;
    let n_ref = cavity_occupation(rho_ref, ops);
    if n_ref <= MIN_OCCUPATION {
        return Err(SimError::VanishingOccupation { n_c: n_ref, t: t_ref });
    }

    let last = *steps.last().expect("grid is non-empty");
    let mut drives = Vec::with_capacity(last);
    let mut n_tau = Vec::with_capacity(steps.len());
    let mut done = 0;
    for &target in &steps {
        while done < target {
            drives.push(integ.step(&mut state)?);
            done += 1;
        }
        let n = cavity_occupation(&state.rho, ops);
        if n <= MIN_OCCUPATION {
            return Err(SimError::VanishingOccupation { n_c: n, t: state.t });
        }
        n_tau.push(n);
    }

    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    // Recombination weights for aρ = ¼(ρ̃₁ − ρ̃₂ − iρ̃₃ + iρ̃₄).
    let helpers = [(one, one), (-one, -one), (i, -i), (-i, i)];
    let mut jobs: Vec<usize> = Vec::new();
    if want.g1 {
        jobs.extend(0..4);
    }
    if want.g2 {
        jobs.push(4);
    }
    let template = integ.clone();
    let side = |rho: CMatrix| HybridState { rho, ..reference.clone() };
    let results: Vec<Result<Vec<Complex64>>> = par::map(&jobs, |&job| {
        let mut integ = template.clone();
        if job < 4 {
            let (c, weight) = helpers[job];
            let rho = helper(rho_ref, &ops.a, c);
            let tr = rho.trace().re;
            if tr <= 1e-300 {
                return Ok(vec![Complex64::new(0.0, 0.0); steps.len()]);
            }
            let scale = weight * (0.25 * tr);
            let start = side(hermitian_part(rho / Complex64::new(tr, 0.0)));
            side_evolution(&mut integ, start, drive, &drives, &steps, |r| a_dagger_trace(r, ops) * scale)
        } else {
            let rho = hermitian_part(&ops.a * rho_ref * ops.a.adjoint() / Complex64::new(n_ref, 0.0));
            side_evolution(&mut integ, side(rho), drive, &drives, &steps, |r| {
                Complex64::new(cavity_occupation(r, ops), 0.0)
            })
        }
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut g1 = vec![Complex64::new(0.0, 0.0); steps.len()];
    let mut g2 = vec![f64::NAN; steps.len()];
    for (job, vals) in jobs.iter().zip(&results) {
        if *job < 4 {
            for (acc, v) in g1.iter_mut().zip(vals) {
                *acc += v;
            }
        } else {
            for (k, v) in vals.iter().enumerate() {
                g2[k] = v.re / n_tau[k];
            }
        }
    }
    if want.g1 {
        for (k, v) in g1.iter_mut().enumerate() {
            *v /= (n_ref * n_tau[k]).sqrt();
        }
    } else {
        g1.iter_mut().for_each(|v| *v = Complex64::new(f64::NAN, f64::NAN));
    }
    let tau = steps.iter().map(|&s| s as f64 * params.dt).collect();
    Ok(CorrelationSeries { t_ref, tau, g1, g2, drive })
}

/// Both functions from the default initial state.
pub fn correlations(params: &SystemParams, t_ref: f64, tau: &[f64]) -> Result<CorrelationSeries> {
    let ops = build_operators(params)?;
    let init = HybridState::ground(&ops, params);
    correlations_from(params, &ops, &init, t_ref, tau, Want { g1: true, g2: true }, SideDrive::default())
}

pub fn g1(params: &SystemParams, t_ref: f64, tau: &[f64]) -> Result<Vec<Complex64>> {
    let ops = build_operators(params)?;
    let init = HybridState::ground(&ops, params);
    Ok(correlations_from(params, &ops, &init, t_ref, tau, Want { g1: true, g2: false }, SideDrive::default())?.g1)
}

pub fn g2(params: &SystemParams, t_ref: f64, tau: &[f64]) -> Result<Vec<f64>> {
    let ops = build_operators(params)?;
    let init = HybridState::ground(&ops, params);
    Ok(correlations_from(params, &ops, &init, t_ref, tau, Want { g1: false, g2: true }, SideDrive::default())?.g2)
}
