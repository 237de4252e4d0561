//! Monte Carlo wavefunction unraveling of the hybrid dynamics.
//!
//! Each trajectory evolves under `H_eff = H − (i/2) Σ γ_μ O_μ†O_μ` and jumps
//! with probability `δp = δt Σ γ_μ ⟨O_μ†O_μ⟩`. All trajectories share one
//! classical atom, driven by the ensemble mean of `Re⟨a†σ⁻⟩`, so they are
//! synchronised after every step.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{classical_force, Generator, ObservableSeries, QuantumObservables, TRUNCATION_WARN_LEVEL};
use crate::error::{Result, SimError};
use crate::operators::{build_operators, CMatrix, FockLabel, OperatorSet};
use crate::par;
use crate::params::SystemParams;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest jump probability a single step may carry.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

/// `h − (i/2)(γ_m b†b + γ_c a†a + γ_a σ⁺σ⁻)`.
pub fn effective_hamiltonian(h: &CMatrix, ops: &OperatorSet, params: &SystemParams) -> CMatrix {
    let mut heff = h.clone();
    for i in 0..ops.dim {
        let damping = params.gamma_m * ops.num_m[(i, i)].re
            + params.gamma_c * ops.num_c[(i, i)].re
            + params.gamma_a * ops.num_a[(i, i)].re;
        heff[(i, i)] -= Complex64::new(0.0, 0.5 * damping);
    }
    heff
}

/// Which dissipation channel fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Jump {
    Membrane,
    Cavity,
    Atom,
}

/// Per-channel jump probabilities `δp_μ = δt γ_μ ⟨O_μ†O_μ⟩` for `(m, c, a)`.
pub fn jump_probabilities(psi: &[Complex64], ops: &OperatorSet, params: &SystemParams, dt: f64) -> [f64; 3] {
    let s = &ops.sparse;
    [
        dt * params.gamma_m * s.b.occupation(psi),
        dt * params.gamma_c * s.a.occupation(psi),
        dt * params.gamma_a * s.sigma_minus.occupation(psi),
    ]
}

fn normalise(psi: &mut [Complex64]) {
    let norm = psi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        let inv = 1.0 / norm;
        psi.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Picks the jump channel from a uniform draw `u ∈ [0, δp)`.
fn choose_channel(dp: &[f64; 3], u: f64) -> Jump {
    if u < dp[0] {
        Jump::Membrane
    } else if u < dp[0] + dp[1] || dp[2] == 0.0 {
        Jump::Cavity
    } else {
        Jump::Atom
    }
}

fn apply_jump(psi: &[Complex64], ops: &OperatorSet, jump: Jump, out: &mut [Complex64]) {
    let s = &ops.sparse;
    match jump {
        Jump::Membrane => s.b.apply(psi, out),
        Jump::Cavity => s.a.apply(psi, out),
        Jump::Atom => s.sigma_minus.apply(psi, out),
    }
    normalise(out);
}

/// One first-order stochastic step with the candidate `(1 − i H_eff δt)|ψ⟩`.
///
/// Returns the new normalised state and the jump that occurred, if any.
pub fn qt_step<R: Rng + ?Sized>(
    psi: &[Complex64],
    h_eff: &CMatrix,
    ops: &OperatorSet,
    params: &SystemParams,
    dt: f64,
    rng: &mut R,
) -> Result<(Vec<Complex64>, Option<Jump>)> {
    let dp = jump_probabilities(psi, ops, params, dt);
    let total: f64 = dp.iter().sum();
    if total > MAX_JUMP_PROBABILITY {
        return Err(SimError::JumpProbabilityOverflow { dp: total, t: f64::NAN });
    }
    let u: f64 = rng.random();
    let mut out = vec![ZERO; psi.len()];
    if u < total {
        let jump = choose_channel(&dp, rng.random::<f64>() * total);
        apply_jump(psi, ops, jump, &mut out);
        return Ok((out, Some(jump)));
    }
    let v = DVector::from_column_slice(psi);
    let hv = h_eff * &v;
    for i in 0..psi.len() {
        out[i] = psi[i] - Complex64::new(0.0, dt) * hv[i];
    }
    normalise(&mut out);
    Ok((out, None))
}

/// Integrator for the no-jump evolution between jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoJumpPropagator {
    /// Literal `(1 − i H_eff δt)|ψ⟩`.
    Euler,
    /// Fourth-order Runge–Kutta on `d|ψ⟩/dt = −i H_eff |ψ⟩` over `δt`.
    #[default]
    Rk4,
}

/// How the initial trajectories are prepared.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Fock(FockLabel),
    /// Each trajectory starts from an eigenvector of `rho`, drawn with its
    /// eigenvalue as probability.
    Mixed(CMatrix),
}

/// Settings for [`qt_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct QtConfig {
    pub n_traj: usize,
    /// Trajectory steps per master-equation step, `δt = dt / substeps`.
    pub substeps: usize,
    pub propagator: NoJumpPropagator,
    pub initial: InitialCondition,
}

impl Default for QtConfig {
    fn default() -> Self {
        QtConfig {
            n_traj: 1000,
            substeps: 5,
            propagator: NoJumpPropagator::Rk4,
            initial: InitialCondition::Fock(FockLabel::ground()),
        }
    }
}

/// Standard errors of the mean for the quantum observables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemSeries {
    pub n_m: Vec<f64>,
    pub n_c: Vec<f64>,
    pub n_a: Vec<f64>,
    pub x_m: Vec<f64>,
    pub p_m: Vec<f64>,
    pub corr: Vec<f64>,
}

/// Ensemble means (as an [`ObservableSeries`]) and their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct QtSeries {
    pub mean: ObservableSeries,
    pub sem: SemSeries,
    pub n_traj: usize,
    pub jump_counts: [u64; 3],
}

impl QtSeries {
    pub const CSV_HEADER: &'static str =
        "t,n_m,n_c,n_a,x_m,p_m,corr,x,p,trunc_flag,sem_n_m,sem_n_c,sem_n_a,sem_x_m,sem_p_m,sem_corr";

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        let m = &self.mean;
        let s = &self.sem;
        for i in 0..m.len() {
            let vals = [
                m.times[i], m.n_m[i], m.n_c[i], m.n_a[i], m.x_m[i], m.p_m[i], m.corr[i], m.x[i], m.p[i],
            ];
            let mut line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
            line.push(u8::from(m.truncation_flags[i]).to_string());
            for v in [s.n_m[i], s.n_c[i], s.n_a[i], s.x_m[i], s.p_m[i], s.corr[i]] {
                line.push(format!("{v:.16e}"));
            }
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Per-trajectory state: wavefunction, private RNG stream and scratch space.
#[derive(Debug, Clone)]
struct Trajectory {
    psi: Vec<Complex64>,
    rng: ChaCha8Rng,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
    jumps: [u64; 3],
    error: Option<f64>,
}

/// RNG stream `index` of the master `seed`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn sample_initial(initial: &InitialCondition, ops: &OperatorSet, rng: &mut ChaCha8Rng) -> Result<Vec<Complex64>> {
    match initial {
        InitialCondition::Fock(label) => ops.fock_ket(*label),
        InitialCondition::Mixed(rho) => {
            if rho.nrows() != ops.dim || rho.ncols() != ops.dim {
                return Err(SimError::InvalidInput("mixed initial state has the wrong dimension".into()));
            }
            let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
            let eig = herm.symmetric_eigen();
            let weights: Vec<f64> = eig.eigenvalues.iter().map(|&w| w.max(0.0)).collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(SimError::InvalidInput("mixed initial state has no positive weight".into()));
            }
            let mut u = rng.random::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = k;
                    break;
                }
                u -= w;
            }
            Ok(eig.eigenvectors.column(pick).iter().copied().collect())
        }
    }
}

impl Trajectory {
    fn step(
        &mut self,
        gen: &Generator,
        ops: &OperatorSet,
        params: &SystemParams,
        coupling: f64,
        dt: f64,
        propagator: NoJumpPropagator,
    ) {
        let dp = jump_probabilities(&self.psi, ops, params, dt);
        let total: f64 = dp.iter().sum();
        if total > MAX_JUMP_PROBABILITY {
            self.error = Some(total);
            return;
        }
        let u: f64 = self.rng.random();
        if u < total {
            let jump = choose_channel(&dp, self.rng.random::<f64>() * total);
            apply_jump(&self.psi, ops, jump, &mut self.tmp);
            std::mem::swap(&mut self.psi, &mut self.tmp);
            self.jumps[jump as usize] += 1;
            return;
        }
        match propagator {
            NoJumpPropagator::Euler => {
                gen.apply_heff(&self.psi, coupling, &mut self.k[0]);
                for (p, k) in self.psi.iter_mut().zip(&self.k[0]) {
                    *p += k * dt;
                }
            }
            NoJumpPropagator::Rk4 => {
                gen.apply_heff(&self.psi, coupling, &mut self.k[0]);
                for s in 1..4 {
                    let h = if s == 3 { dt } else { 0.5 * dt };
                    for ((t, p), k) in self.tmp.iter_mut().zip(&self.psi).zip(&self.k[s - 1]) {
                        *t = p + k * h;
                    }
                    let (_, rest) = self.k.split_at_mut(s);
                    gen.apply_heff(&self.tmp, coupling, &mut rest[0]);
                }
                let w = dt / 6.0;
                let [k1, k2, k3, k4] = &self.k;
                for i in 0..self.psi.len() {
                    self.psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
                }
            }
        }
        normalise(&mut self.psi);
    }

    fn observables(&self, ops: &OperatorSet) -> QuantumObservables {
        let s = &ops.sparse;
        let diag = |d: &[f64]| d.iter().zip(&self.psi).map(|(w, v)| w * v.norm_sqr()).sum::<f64>();
        QuantumObservables {
            n_m: diag(&s.num_m),
            n_c: diag(&s.num_c),
            n_a: diag(&s.num_a),
            x_m: s.x_m.expectation(&self.psi).re,
            p_m: s.p_m.expectation(&self.psi).re,
            corr: s.corr.expectation(&self.psi).re,
        }
    }
}

fn mean_and_sem(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Evolves `config.n_traj` trajectories to `params.t_final`, sampling every
/// `params.record_stride` master-equation steps.
pub fn qt_ensemble(params: &SystemParams, config: &QtConfig) -> Result<QtSeries> {
    params.validate()?;
    if config.n_traj < 2 {
        return Err(SimError::InvalidInput(format!("need at least 2 trajectories, got {}", config.n_traj)));
    }
    if config.substeps == 0 {
        return Err(SimError::InvalidInput("substeps must be >= 1".into()));
    }
    let ops = build_operators(params)?;
    let gen = Generator::new(&ops, params);
    let dt = params.dt / config.substeps as f64;

    let mut trajs = (0..config.n_traj)
        .map(|j| {
            let mut rng = trajectory_rng(params.seed, j);
            let psi = sample_initial(&config.initial, &ops, &mut rng)?;
            let z = vec![ZERO; ops.dim];
            Ok(Trajectory {
                psi,
                rng,
                k: [z.clone(), z.clone(), z.clone(), z.clone()],
                tmp: z,
                jumps: [0; 3],
                error: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (mut x, mut p, mut t) = (params.x0, params.p0, 0.0);
    let mut mean = ObservableSeries::default();
    let mut sem = SemSeries::default();
    let record = |trajs: &[Trajectory], t: f64, x: f64, p: f64, mean: &mut ObservableSeries, sem: &mut SemSeries| {
        let obs: Vec<QuantumObservables> = trajs.iter().map(|tr| tr.observables(&ops)).collect();
        let n = obs.len();
        let (n_m, e_m) = mean_and_sem(obs.iter().map(|o| o.n_m), n);
        let (n_c, e_c) = mean_and_sem(obs.iter().map(|o| o.n_c), n);
        let (n_a, e_a) = mean_and_sem(obs.iter().map(|o| o.n_a), n);
        let (x_m, e_x) = mean_and_sem(obs.iter().map(|o| o.x_m), n);
        let (p_m, e_p) = mean_and_sem(obs.iter().map(|o| o.p_m), n);
        let (corr, e_corr) = mean_and_sem(obs.iter().map(|o| o.corr), n);
        let top = trajs.iter().fold((0.0f64, 0.0f64), |acc, tr| {
            let (m, c) = top_levels(&tr.psi, &ops);
            (acc.0 + m, acc.1 + c)
        });
        let flag = top.0 / n as f64 > TRUNCATION_WARN_LEVEL || top.1 / n as f64 > TRUNCATION_WARN_LEVEL;
        mean.push(t, &QuantumObservables { n_m, n_c, n_a, x_m, p_m, corr }, x, p, flag);
        sem.n_m.push(e_m);
        sem.n_c.push(e_c);
        sem.n_a.push(e_a);
        sem.x_m.push(e_x);
        sem.p_m.push(e_p);
        sem.corr.push(e_corr);
    };
    record(&trajs, t, x, p, &mut mean, &mut sem);

    let (g_ac, omega_r, v0, v1) = (params.g_ac, params.omega_r, params.v0, params.v1);
    for step in 1..=params.n_steps() {
        for _ in 0..config.substeps {
            let corr = trajs.iter().map(|tr| gen.corr_pure(&tr.psi)).sum::<f64>() / trajs.len() as f64;
            let coupling = g_ac * (2.0 * x).sin();
            par::for_each_mut(&mut trajs, |tr| tr.step(&gen, &ops, params, coupling, dt, config.propagator));
            if let Some(dp) = trajs.iter().find_map(|tr| tr.error) {
                return Err(SimError::JumpProbabilityOverflow { dp, t });
            }
            // Classical RK4 with the ensemble coupling frozen over the step.
            let f = |x: f64, p: f64| (2.0 * omega_r * p, classical_force(x, g_ac, v0, v1, corr));
            let (a1, b1) = f(x, p);
            let (a2, b2) = f(x + 0.5 * dt * a1, p + 0.5 * dt * b1);
            let (a3, b3) = f(x + 0.5 * dt * a2, p + 0.5 * dt * b2);
            let (a4, b4) = f(x + dt * a3, p + dt * b3);
            x += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            p += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        t = step as f64 * params.dt;
        if !x.is_finite() || !p.is_finite() {
            return Err(SimError::Divergence { t });
        }
        if step % params.record_stride == 0 {
            record(&trajs, t, x, p, &mut mean, &mut sem);
        }
    }

    let mut jump_counts = [0u64; 3];
    for tr in &trajs {
        for (total, j) in jump_counts.iter_mut().zip(tr.jumps) {
            *total += j;
        }
    }
    Ok(QtSeries { mean, sem, n_traj: config.n_traj, jump_counts })
}

fn top_levels(psi: &[Complex64], ops: &OperatorSet) -> (f64, f64) {
    let (mut m, mut c) = (0.0, 0.0);
    for (i, v) in psi.iter().enumerate() {
        let nc = (i / 2) % ops.n_c;
        let nm = i / (2 * ops.n_c);
        if nm == ops.n_m - 1 {
            m += v.norm_sqr();
        }
        if nc == ops.n_c - 1 {
            c += v.norm_sqr();
        }
    }
    (m, c)
}
