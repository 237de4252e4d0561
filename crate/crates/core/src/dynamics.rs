//! Joint integration of the Lindblad master equation and the classical
//! atomic motion, plus the observable record.
//!
//! The quantum state and the classical pair `(x, p)` are advanced as one ODE
//! with classical RK4: every stage re-evaluates the mode function `sin(2x)`
//! and the coupling `Re⟨a†σ⁻⟩` from that stage's values.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::operators::{build_operators, hermiticity_residual, CMatrix, CsrMatrix, FockLabel, LadderOp, OperatorSet};
use crate::params::SystemParams;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Highest-level population above which a sample is flagged as truncated.
pub const TRUNCATION_WARN_LEVEL: f64 = 1e-6;

pub const CSV_HEADER: &str = "t,n_m,n_c,n_a,x_m,p_m,corr,x,p,trunc_flag";

/// Density matrix plus the classical atom coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub rho: CMatrix,
    pub x: f64,
    pub p: f64,
    pub t: f64,
}

impl HybridState {
    /// Vacuum ⊗ vacuum ⊗ ground with the classical initial condition of `params`.
    pub fn ground(ops: &OperatorSet, params: &SystemParams) -> Self {
        Self::from_fock(ops, FockLabel::ground(), params.x0, params.p0)
            .expect("ground state is inside every truncation")
    }

    pub fn from_fock(ops: &OperatorSet, label: FockLabel, x: f64, p: f64) -> Result<Self> {
        Ok(HybridState { rho: ops.fock_density(label)?, x, p, t: 0.0 })
    }

    pub fn physicality(&self) -> Physicality {
        Physicality::of(&self.rho)
    }
}

/// Trace, Hermiticity and positivity diagnostics of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physicality {
    pub trace_error: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

impl Physicality {
    pub fn of(rho: &CMatrix) -> Self {
        let trace_error = (rho.trace() - Complex64::new(1.0, 0.0)).norm();
        let hermiticity = hermiticity_residual(rho);
        // Symmetrise before the eigen-solve so the residual is reported, not hidden.
        let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        let min_eigenvalue = herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        Physicality { trace_error, hermiticity, min_eigenvalue }
    }

    /// Trace within 1e-6, Hermitian within 1e-9, eigenvalues above -1e-8.
    pub fn is_physical(&self) -> bool {
        self.trace_error < 1e-6 && self.hermiticity < 1e-9 && self.min_eigenvalue >= -1e-8
    }
}

/// Quantum expectation values at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuantumObservables {
    pub n_m: f64,
    pub n_c: f64,
    pub n_a: f64,
    pub x_m: f64,
    pub p_m: f64,
    /// `Re⟨a†σ⁻⟩`.
    pub corr: f64,
}

/// All expectation values via `Tr(Oρ)`.
pub fn observables(rho: &CMatrix, ops: &OperatorSet) -> QuantumObservables {
    let diag = |d: &[f64]| -> f64 { d.iter().enumerate().map(|(i, &w)| w * rho[(i, i)].re).sum() };
    let s = &ops.sparse;
    QuantumObservables {
        n_m: diag(&s.num_m),
        n_c: diag(&s.num_c),
        n_a: diag(&s.num_a),
        x_m: s.x_m.trace_product(rho).re,
        p_m: s.p_m.trace_product(rho).re,
        corr: s.corr.trace_product(rho).re,
    }
}

/// Time-stamped observable record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub n_m: Vec<f64>,
    pub n_c: Vec<f64>,
    pub n_a: Vec<f64>,
    pub x_m: Vec<f64>,
    pub p_m: Vec<f64>,
    pub corr: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Set when the top membrane or cavity level holds more than
    /// [`TRUNCATION_WARN_LEVEL`] population.
    pub truncation_flags: Vec<bool>,
    /// Per-sample physicality diagnostics; empty unless requested.
    pub physicality: Vec<Physicality>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, q: &QuantumObservables, x: f64, p: f64, truncated: bool) {
        self.times.push(t);
        self.n_m.push(q.n_m);
        self.n_c.push(q.n_c);
        self.n_a.push(q.n_a);
        self.x_m.push(q.x_m);
        self.p_m.push(q.p_m);
        self.corr.push(q.corr);
        self.x.push(x);
        self.p.push(p);
        self.truncation_flags.push(truncated);
    }

    pub fn any_truncation_warning(&self) -> bool {
        self.truncation_flags.iter().any(|&f| f)
    }

    /// Column by CSV name.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        Some(match name {
            "t" => &self.times,
            "n_m" => &self.n_m,
            "n_c" => &self.n_c,
            "n_a" => &self.n_a,
            "x_m" => &self.x_m,
            "p_m" => &self.p_m,
            "corr" => &self.corr,
            "x" => &self.x,
            "p" => &self.p,
            _ => return None,
        })
    }

    /// Samples whose time lies in the last `fraction` of the record.
    pub fn tail_start(&self, fraction: f64) -> usize {
        let n = self.len();
        if n == 0 {
            return 0;
        }
        let (t0, t1) = (self.times[0], self.times[n - 1]);
        let cut = t1 - fraction * (t1 - t0);
        self.times.iter().position(|&t| t >= cut - 1e-9 * (1.0 + cut.abs())).unwrap_or(n)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                self.times[i],
                self.n_m[i],
                self.n_c[i],
                self.n_a[i],
                self.x_m[i],
                self.p_m[i],
                self.corr[i],
                self.x[i],
                self.p[i],
                u8::from(self.truncation_flags[i])
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != CSV_HEADER {
            return Err(SimError::Malformed {
                path: path.to_string(),
                row: 1,
                column: 1,
                reason: format!("expected header `{CSV_HEADER}`"),
            });
        }
        let mut s = ObservableSeries::default();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let malformed = |column: usize, reason: String| SimError::Malformed {
                path: path.to_string(),
                row: row + 2,
                column,
                reason,
            };
            if fields.len() != 10 {
                return Err(malformed(fields.len().min(10) + 1, format!("expected 10 fields, got {}", fields.len())));
            }
            let mut v = [0.0; 9];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = fields[k]
                    .trim()
                    .parse()
                    .map_err(|_| malformed(k + 1, format!("not a number: `{}`", fields[k])))?;
            }
            let flag = match fields[9].trim() {
                "0" => false,
                "1" => true,
                other => return Err(malformed(10, format!("trunc_flag must be 0 or 1, got `{other}`"))),
            };
            let q = QuantumObservables { n_m: v[1], n_c: v[2], n_a: v[3], x_m: v[4], p_m: v[5], corr: v[6] };
            s.push(v[0], &q, v[7], v[8], flag);
        }
        Ok(s)
    }
}

/// Force on the classical atom, `−∂⟨H + H_a⟩/∂x`.
pub fn classical_force(x: f64, g_ac: f64, v0: f64, v1: f64, corr: f64) -> f64 {
    -4.0 * g_ac * (2.0 * x).cos() * corr - (v1 * x.cos() + v0 * (2.0 * x).sin())
}

/// Classical atomic energy `ω_r p² + V0 sin²x + V1 sin x`.
pub fn classical_energy(x: f64, p: f64, params: &SystemParams) -> f64 {
    params.omega_r * p * p + params.v0 * x.sin().powi(2) + params.v1 * x.sin()
}

/// Lindblad generator with the Hamiltonian split into a cached fixed part and
/// the mode-function part. Only the scalar `g_ac sin(2x)` changes per stage.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// `−i (h_fixed − (i/2) Σ γ O†O)` on the merged pattern.
    fixed: Vec<Complex64>,
    /// `−i h_ac` on the merged pattern.
    coupling: Vec<Complex64>,
    /// The same operators stored by diagonal: `K[i, i + offset]`.
    bands: Vec<Band>,
    jumps: Vec<Jump>,
    corr: CsrMatrix,
}

/// Jump operator `O` with rate `gamma`. `shift` is set when every nonzero
/// row `i` of `O` reads column `i + shift`.
#[derive(Debug, Clone)]
struct Jump {
    gamma: f64,
    op: LadderOp,
    shift: Option<usize>,
}

/// One diagonal of `K = −i H_eff`, valid for rows `lo..hi`.
#[derive(Debug, Clone)]
struct Band {
    offset: isize,
    lo: usize,
    hi: usize,
    fixed: Vec<Complex64>,
    coupling: Vec<Complex64>,
    /// Every entry of the band is purely imaginary.
    imaginary: bool,
}

/// Scratch buffers for [`Generator::rhs_into`].
#[derive(Debug, Clone)]
pub struct RhsWork {
    bands: Vec<Vec<Complex64>>,
    m: CMatrix,
}

impl Generator {
    pub fn new(ops: &OperatorSet, params: &SystemParams) -> Self {
        Self::from_parts(ops, &ops.h_fixed, &ops.h_ac, params)
    }

    fn from_parts(ops: &OperatorSet, h_fixed: &CMatrix, h_ac: &CMatrix, params: &SystemParams) -> Self {
        let dim = ops.dim;
        let s = &ops.sparse;
        let minus_i = Complex64::new(0.0, -1.0);
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut fixed = Vec::new();
        let mut coupling = Vec::new();
        for i in 0..dim {
            let damping = params.gamma_m * s.num_m[i] + params.gamma_c * s.num_c[i] + params.gamma_a * s.num_a[i];
            for j in 0..dim {
                let mut f = h_fixed[(i, j)];
                if i == j {
                    f -= Complex64::new(0.0, 0.5 * damping);
                }
                let c = h_ac[(i, j)];
                if f != ZERO || c != ZERO {
                    cols.push(j);
                    fixed.push(minus_i * f);
                    coupling.push(minus_i * c);
                }
            }
            row_ptr.push(cols.len());
        }
        let jumps = [(params.gamma_m, &s.b), (params.gamma_c, &s.a), (params.gamma_a, &s.sigma_minus)]
            .into_iter()
            .filter(|(g, _)| *g != 0.0)
            .map(|(gamma, op)| {
                let mut shifts = (0..dim).filter(|&i| op.amp[i] != 0.0).map(|i| op.src[i].checked_sub(i));
                let first = shifts.next().flatten();
                let shift = if shifts.all(|s| s == first) { first } else { None };
                Jump { gamma, op: op.clone(), shift }
            })
            .collect();
        let mut offsets: Vec<isize> = (0..dim)
            .flat_map(|i| (row_ptr[i]..row_ptr[i + 1]).map(|e| cols[e] as isize - i as isize).collect::<Vec<_>>())
            .collect();
        offsets.sort_unstable();
        offsets.dedup();
        let bands = offsets
            .into_iter()
            .map(|offset| {
                let lo = (-offset).max(0) as usize;
                let hi = (dim as isize - offset.max(0)) as usize;
                let mut band =
                    Band { offset, lo, hi, fixed: vec![ZERO; dim], coupling: vec![ZERO; dim], imaginary: false };
                for i in 0..dim {
                    for e in row_ptr[i]..row_ptr[i + 1] {
                        if cols[e] as isize - i as isize == offset {
                            band.fixed[i] = fixed[e];
                            band.coupling[i] = coupling[e];
                        }
                    }
                }
                band.imaginary = band.fixed.iter().chain(&band.coupling).all(|v| v.re == 0.0);
                band
            })
            .collect();
        Generator { dim, row_ptr, cols, fixed, coupling, bands, jumps, corr: s.corr.clone() }
    }

    /// Generator for an arbitrary Hermitian `h` (no mode-function part).
    pub fn with_hamiltonian(ops: &OperatorSet, h: &CMatrix, params: &SystemParams) -> Self {
        Self::from_parts(ops, h, &CMatrix::zeros(ops.dim, ops.dim), params)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn work(&self) -> RhsWork {
        RhsWork { bands: vec![vec![ZERO; self.dim]; self.bands.len()], m: CMatrix::zeros(self.dim, self.dim) }
    }

    /// `out = −i H_eff ψ` with `H_eff = h_fixed + coupling·h_ac − (i/2) Σ γ O†O`.
    pub fn apply_heff(&self, psi: &[Complex64], coupling: f64, out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = ZERO;
            for e in a..b {
                acc += (self.fixed[e] + self.coupling[e] * coupling) * psi[self.cols[e]];
            }
            *o = acc;
        }
    }

    /// `Re ⟨ψ|a†σ⁻|ψ⟩`.
    pub fn corr_pure(&self, psi: &[Complex64]) -> f64 {
        self.corr.expectation(psi).re
    }

    /// `Re Tr(a†σ⁻ ρ)`.
    pub fn corr(&self, rho: &CMatrix) -> f64 {
        self.corr.trace_product(rho).re
    }

    /// `out = L(ρ)` with Hamiltonian `h_fixed + coupling·h_ac`.
    ///
    /// `ρ` must be Hermitian. Uses `L(ρ) = M + M†` with
    /// `M = −i H_eff ρ + ½ Σ γ OρO†`, so the result is exactly Hermitian.
    pub fn rhs_into(&self, rho: &CMatrix, coupling: f64, out: &mut CMatrix, work: &mut RhsWork) {
        self.half_generator(rho, coupling, work);
        let o = out.as_mut_slice();
        self.emit(&work.m, |k, v| o[k] = v);
    }

    /// Fills `work.m` with `M`.
    fn half_generator(&self, rho: &CMatrix, coupling: f64, work: &mut RhsWork) {
        let d = self.dim;
        for (vals, band) in work.bands.iter_mut().zip(&self.bands) {
            for ((v, &f), &c) in vals.iter_mut().zip(&band.fixed).zip(&band.coupling) {
                *v = if band.imaginary {
                    Complex64::new(0.0, f.im + c.im * coupling)
                } else {
                    f + c * coupling
                };
            }
        }
        let rho_s = rho.as_slice();
        let m = work.m.as_mut_slice();
        // M[i, j] = Σ_offset K[i, i + offset] ρ[i + offset, j], one diagonal at a time.
        for j in 0..d {
            let col = &rho_s[j * d..(j + 1) * d];
            let mcol = &mut m[j * d..(j + 1) * d];
            mcol.fill(ZERO);
            for (band, vals) in self.bands.iter().zip(&work.bands) {
                let (lo, hi) = (band.lo, band.hi);
                let src = &col[(lo as isize + band.offset) as usize..(hi as isize + band.offset) as usize];
                let (dst, k) = (&mut mcol[lo..hi], &vals[lo..hi]);
                let (k, src) = (&k[..dst.len()], &src[..dst.len()]);
                if band.imaginary {
                    for i in 0..dst.len() {
                        let (w, r) = (k[i].im, src[i]);
                        dst[i].re -= w * r.im;
                        dst[i].im += w * r.re;
                    }
                } else {
                    for i in 0..dst.len() {
                        let (k, r) = (k[i], src[i]);
                        dst[i].re += k.re * r.re - k.im * r.im;
                        dst[i].im += k.re * r.im + k.im * r.re;
                    }
                }
            }
            for Jump { gamma, op, shift } in &self.jumps {
                let aj = op.amp[j];
                if aj == 0.0 {
                    continue;
                }
                let src_col = &rho_s[op.src[j] * d..(op.src[j] + 1) * d];
                match *shift {
                    Some(s) => {
                        let (amp, src_col) = (&op.amp[..d - s], &src_col[s..]);
                        for ((o, &ai), &r) in mcol.iter_mut().zip(amp).zip(src_col) {
                            *o += r * (0.5 * gamma * (ai * aj));
                        }
                    }
                    None => {
                        for (i, o) in mcol.iter_mut().enumerate() {
                            let ai = op.amp[i];
                            if ai != 0.0 {
                                *o += src_col[op.src[i]] * (0.5 * gamma * (ai * aj));
                            }
                        }
                    }
                }
            }
        }
    }

    /// Calls `f(k, (M + M†)[k])` for every column-major index, tile by tile.
    #[inline(always)]
    fn emit(&self, m: &CMatrix, mut f: impl FnMut(usize, Complex64)) {
        let d = self.dim;
        let m = m.as_slice();
        const TILE: usize = 32;
        for jb in (0..d).step_by(TILE) {
            for ib in (0..d).step_by(TILE) {
                for j in jb..(jb + TILE).min(d) {
                    for i in ib..(ib + TILE).min(d) {
                        f(j * d + i, m[j * d + i] + m[i * d + j].conj());
                    }
                }
            }
        }
    }
}

/// Right-hand side of the master equation for an explicit Hamiltonian `h`:
/// `−i[h, ρ] + Σ_μ γ_μ (OρO† − ½{O†O, ρ})` over `O ∈ {b, a, σ⁻}`.
pub fn lindblad_rhs(rho: &CMatrix, h: &CMatrix, ops: &OperatorSet, params: &SystemParams) -> CMatrix {
    let gen = Generator::with_hamiltonian(ops, h, params);
    let mut out = CMatrix::zeros(ops.dim, ops.dim);
    let mut work = gen.work();
    gen.rhs_into(rho, 0.0, &mut out, &mut work);
    out
}

/// The four RK4 stage values of `g_ac sin(2x)` used by one step. Replaying
/// them reproduces the step's Hamiltonian history for linear side evolutions.
pub type StageDrive = [f64; 4];

/// Reusable RK4 integrator for the hybrid system.
#[derive(Debug, Clone)]
pub struct HybridIntegrator {
    gen: Generator,
    dt: f64,
    g_ac: f64,
    omega_r: f64,
    v0: f64,
    v1: f64,
    acc: CMatrix,
    stage: CMatrix,
    work: RhsWork,
}

impl HybridIntegrator {
    pub fn new(ops: &OperatorSet, params: &SystemParams) -> Self {
        Self::with_dt(ops, params, params.dt)
    }

    pub fn with_dt(ops: &OperatorSet, params: &SystemParams, dt: f64) -> Self {
        let gen = Generator::new(ops, params);
        let z = CMatrix::zeros(ops.dim, ops.dim);
        let work = gen.work();
        HybridIntegrator {
            gen,
            dt,
            g_ac: params.g_ac,
            omega_r: params.omega_r,
            v0: params.v0,
            v1: params.v1,
            acc: z.clone(),
            stage: z,
            work,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    fn force(&self, x: f64, corr: f64) -> f64 {
        classical_force(x, self.g_ac, self.v0, self.v1, corr)
    }

    /// RK4 stage `s` of `ρ`: evaluates `L` at the current stage state
    /// (`rho` itself for `s = 0`), adds it to the accumulator and prepares
    /// the next stage state.
    fn rho_stage(&mut self, rho: &CMatrix, s: usize, coupling: f64) {
        let dt = self.dt;
        let input = if s == 0 { rho } else { &self.stage };
        self.gen.half_generator(input, coupling, &mut self.work);
        let weight = [dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0][s];
        let r = rho.as_slice();
        let acc = self.acc.as_mut_slice();
        let stage = self.stage.as_mut_slice();
        match s {
            0 => self.gen.emit(&self.work.m, |k, v| {
                acc[k] = r[k] + v * weight;
                stage[k] = r[k] + v * (0.5 * dt);
            }),
            1 | 2 => {
                let h = if s == 1 { 0.5 * dt } else { dt };
                self.gen.emit(&self.work.m, |k, v| {
                    acc[k] += v * weight;
                    stage[k] = r[k] + v * h;
                })
            }
            _ => self.gen.emit(&self.work.m, |k, v| acc[k] += v * weight),
        }
    }

    /// Advances `(ρ, x, p)` by one step and returns the stage couplings used.
    pub fn step(&mut self, state: &mut HybridState) -> Result<StageDrive> {
        let dt = self.dt;
        let half = 0.5 * dt;
        let (x0, p0) = (state.x, state.p);
        let mut drive = [0.0; 4];
        let mut kx = [0.0; 4];
        let mut kp = [0.0; 4];

        for s in 0..4 {
            let (xs, ps, c) = if s == 0 {
                (x0, p0, self.gen.corr(&state.rho))
            } else {
                let h = if s == 3 { dt } else { half };
                (x0 + h * kx[s - 1], p0 + h * kp[s - 1], self.gen.corr(&self.stage))
            };
            drive[s] = self.g_ac * (2.0 * xs).sin();
            kx[s] = 2.0 * self.omega_r * ps;
            kp[s] = self.force(xs, c);
            self.rho_stage(&state.rho, s, drive[s]);
        }

        std::mem::swap(&mut state.rho, &mut self.acc);
        state.x = x0 + dt / 6.0 * (kx[0] + 2.0 * kx[1] + 2.0 * kx[2] + kx[3]);
        state.p = p0 + dt / 6.0 * (kp[0] + 2.0 * kp[1] + 2.0 * kp[2] + kp[3]);
        state.t += dt;

        if !state.x.is_finite() || !state.p.is_finite() || !state.rho.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        {
            return Err(SimError::Divergence { t: state.t });
        }
        Ok(drive)
    }

    /// Linear RK4 step of `ρ` under prescribed stage couplings.
    pub fn step_driven(&mut self, rho: &mut CMatrix, drive: &StageDrive) {
        for (s, &c) in drive.iter().enumerate() {
            self.rho_stage(rho, s, c);
        }
        std::mem::swap(rho, &mut self.acc);
    }
}

/// One hybrid RK4 step.
pub fn step_hybrid(state: &HybridState, ops: &OperatorSet, params: &SystemParams) -> Result<HybridState> {
    let mut integ = HybridIntegrator::new(ops, params);
    let mut next = state.clone();
    integ.step(&mut next)?;
    Ok(next)
}

/// `(ρ + ρ†)/2`, Hermitian to the last bit. The integrator amplifies any
/// anti-Hermitian residue, so states built from matrix products go through here.
pub fn hermitian_part(rho: CMatrix) -> CMatrix {
    let adj = rho.adjoint();
    (rho + adj) * Complex64::new(0.5, 0.0)
}

/// Options for [`evolve_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EvolveOptions {
    /// Record trace/Hermiticity/eigenvalue diagnostics at every sample.
    pub check_physicality: bool,
}

/// Result of a full evolution: the record and the final state.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub series: ObservableSeries,
    pub final_state: HybridState,
}

/// Evolves from `initial` to `params.t_final`, sampling every `record_stride`
/// steps (and at `t = 0`).
pub fn evolve(params: &SystemParams, initial: &HybridState) -> Result<ObservableSeries> {
    let ops = build_operators(params)?;
    Ok(evolve_with(params, &ops, initial, EvolveOptions::default())?.series)
}

/// Default initial state: vacuum ⊗ vacuum ⊗ ground at `(x0, p0)`.
pub fn evolve_default(params: &SystemParams) -> Result<ObservableSeries> {
    let ops = build_operators(params)?;
    let init = HybridState::ground(&ops, params);
    Ok(evolve_with(params, &ops, &init, EvolveOptions::default())?.series)
}

pub fn evolve_with(
    params: &SystemParams,
    ops: &OperatorSet,
    initial: &HybridState,
    opts: EvolveOptions,
) -> Result<Evolution> {
    params.validate()?;
    if initial.rho.nrows() != ops.dim {
        return Err(SimError::InvalidInput(format!(
            "initial state has dimension {}, operators have {}",
            initial.rho.nrows(),
            ops.dim
        )));
    }
    let residual = hermiticity_residual(&initial.rho);
    if residual > 1e-9 {
        return Err(SimError::InvalidInput(format!("initial state is not Hermitian (residual {residual:.3e})")));
    }
    let mut integ = HybridIntegrator::new(ops, params);
    let mut state = initial.clone();
    state.rho = hermitian_part(state.rho);
    let mut series = ObservableSeries::default();
    let record = |series: &mut ObservableSeries, state: &HybridState| {
        let q = observables(&state.rho, ops);
        let (top_m, top_c) = ops.top_level_populations(&state.rho);
        let flag = top_m > TRUNCATION_WARN_LEVEL || top_c > TRUNCATION_WARN_LEVEL;
        series.push(state.t, &q, state.x, state.p, flag);
        if opts.check_physicality {
            series.physicality.push(state.physicality());
        }
    };
    record(&mut series, &state);
    let n_steps = params.n_steps();
    for step in 1..=n_steps {
        integ.step(&mut state)?;
        if step % params.record_stride == 0 {
            record(&mut series, &state);
        }
    }
    Ok(Evolution { series, final_state: state })
}
