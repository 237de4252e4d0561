//! Truncated composite Hilbert space `membrane ⊗ cavity ⊗ atom` and the
//! operators of the driven hybrid Hamiltonian.
//!
//! Ket labels `|n_m n_c n_a⟩` follow the same ordering; the flat basis index is
//! `(n_m * N_c + n_c) * 2 + n_a` with `n_a = 0` the atomic ground state.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::params::SystemParams;

pub type CMatrix = DMatrix<Complex64>;

/// Largest composite dimension `build_operators` accepts by default.
pub const DEFAULT_DIM_CAP: usize = 1024;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Fock-product basis label `|n_m n_c n_a⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockLabel {
    pub membrane: usize,
    pub cavity: usize,
    /// 0 = ground, 1 = excited.
    pub atom: usize,
}

impl FockLabel {
    pub const fn new(membrane: usize, cavity: usize, atom: usize) -> Self {
        FockLabel { membrane, cavity, atom }
    }

    pub const fn ground() -> Self {
        FockLabel::new(0, 0, 0)
    }

    /// Flat basis index for truncations `(n_m, n_c)`.
    pub fn index(&self, n_m: usize, n_c: usize) -> Result<usize> {
        if self.membrane >= n_m || self.cavity >= n_c || self.atom > 1 {
            return Err(SimError::InvalidInput(format!(
                "Fock label |{} {} {}> outside truncation ({n_m}, {n_c}, 2)",
                self.membrane, self.cavity, self.atom
            )));
        }
        Ok((self.membrane * n_c + self.cavity) * 2 + self.atom)
    }

    /// Parses a three-digit label such as `100`, or a whitespace/comma
    /// separated triple such as `1,0,0`, in `n_m n_c n_a` order.
    pub fn parse(label: &str) -> Result<Self> {
        let trimmed = label.trim().trim_start_matches('|').trim_end_matches('>');
        let parts: Vec<&str> = if trimmed.contains(|c: char| c == ',' || c.is_whitespace()) {
            trimmed
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect()
        } else {
            trimmed
                .char_indices()
                .map(|(i, c)| &trimmed[i..i + c.len_utf8()])
                .collect()
        };
        let bad = || SimError::InvalidInput(format!("cannot parse Fock label `{label}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut n = [0usize; 3];
        for (slot, part) in n.iter_mut().zip(&parts) {
            *slot = part.parse().map_err(|_| bad())?;
        }
        Ok(FockLabel::new(n[0], n[1], n[2]))
    }
}

/// Compressed sparse row matrix, used for the fast products inside the
/// integrators. Built from the dense operators by dropping exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub(crate) n: usize,
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) cols: Vec<usize>,
    pub(crate) vals: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn from_dense(m: &CMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "CSR conversion expects a square matrix");
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != ZERO {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> (&[usize], &[Complex64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// `out = self * x`.
    pub fn mul_vec(&self, x: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&k, &v)| v * x[k]).sum();
        }
    }

    /// `⟨x| self |x⟩`.
    pub fn expectation(&self, x: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let s: Complex64 = cols.iter().zip(vals).map(|(&k, &v)| v * x[k]).sum();
            acc += x[i].conj() * s;
        }
        acc
    }

    /// `Tr(self * rho)`.
    pub fn trace_product(&self, rho: &CMatrix) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&k, &v) in cols.iter().zip(vals) {
                acc += v * rho[(k, i)];
            }
        }
        acc
    }
}

/// Annihilation-type operator with at most one real entry per row, stored as
/// `row -> (source column, amplitude)`. Rows without an entry carry amplitude 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderOp {
    pub(crate) src: Vec<usize>,
    pub(crate) amp: Vec<f64>,
}

impl LadderOp {
    fn from_dense(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut src = vec![0; n];
        let mut amp = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != ZERO {
                    debug_assert!(amp[i] == 0.0 && v.im == 0.0);
                    src[i] = j;
                    amp[i] = v.re;
                }
            }
        }
        LadderOp { src, amp }
    }

    /// `out = self * x`.
    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        for ((o, &k), &a) in out.iter_mut().zip(&self.src).zip(&self.amp) {
            *o = x[k] * a;
        }
    }

    /// `⟨x| self† self |x⟩`.
    pub fn occupation(&self, x: &[Complex64]) -> f64 {
        self.src
            .iter()
            .zip(&self.amp)
            .map(|(&k, &a)| a * a * x[k].norm_sqr())
            .sum()
    }
}

/// Precomputed operators on the composite space. Immutable once built.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub n_m: usize,
    pub n_c: usize,
    pub dim: usize,
    pub b: CMatrix,
    pub a: CMatrix,
    pub sigma_minus: CMatrix,
    pub num_m: CMatrix,
    pub num_c: CMatrix,
    pub num_a: CMatrix,
    /// `ω_m b†b − Δ_c a†a − Δ_a σ⁺σ⁻ + η(a + a†) − g_mc (b† + b) a†a`.
    pub h_fixed: CMatrix,
    /// `a†σ⁻ + aσ⁺`, scaled by `g_ac sin(2x)` in the full Hamiltonian.
    pub h_ac: CMatrix,
    /// `(b + b†)/√2`.
    pub x_m_op: CMatrix,
    /// `(b − b†)/(i√2)`.
    pub p_m_op: CMatrix,
    /// `a†σ⁻`.
    pub corr_op: CMatrix,
    pub(crate) sparse: SparseOps,
}

/// Sparse mirrors of the dense operators for the hot loops.
#[derive(Debug, Clone)]
pub(crate) struct SparseOps {
    pub x_m: CsrMatrix,
    pub p_m: CsrMatrix,
    pub corr: CsrMatrix,
    pub b: LadderOp,
    pub a: LadderOp,
    pub sigma_minus: LadderOp,
    /// Diagonals of the number operators.
    pub num_m: Vec<f64>,
    pub num_c: Vec<f64>,
    pub num_a: Vec<f64>,
}

/// Single-mode annihilation operator on `n` Fock levels.
pub fn destroy(n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for k in 1..n {
        m[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    m
}

/// Two-level lowering operator in the basis `(g, e)`.
pub fn lowering() -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 1)] = ONE;
    m
}

/// Exact number operator `diag(0, 1, .., n−1)`.
pub fn number(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| if i == j { Complex64::new(i as f64, 0.0) } else { ZERO })
}

fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Largest entrywise modulus of `m − m†`.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn build_operators(params: &SystemParams) -> Result<OperatorSet> {
    build_operators_with_cap(params, DEFAULT_DIM_CAP)
}

pub fn build_operators_with_cap(params: &SystemParams, cap: usize) -> Result<OperatorSet> {
    let (n_m, n_c) = (params.n_m, params.n_c);
    if n_m < 2 {
        return Err(SimError::InvalidParam { key: "n_m", reason: format!("must be >= 2, got {n_m}") });
    }
    if n_c < 2 {
        return Err(SimError::InvalidParam { key: "n_c", reason: format!("must be >= 2, got {n_c}") });
    }
    let dim = n_m
        .checked_mul(n_c)
        .and_then(|d| d.checked_mul(2))
        .ok_or(SimError::DimensionCap { dim: usize::MAX, cap })?;
    if dim > cap {
        return Err(SimError::DimensionCap { dim, cap });
    }

    let (im, ic, ia) = (identity(n_m), identity(n_c), identity(2));
    let b = destroy(n_m).kronecker(&ic).kronecker(&ia);
    let a = im.kronecker(&destroy(n_c)).kronecker(&ia);
    let sigma_minus = im.kronecker(&ic).kronecker(&lowering());

    let bd = b.adjoint();
    let ad = a.adjoint();
    let sp = sigma_minus.adjoint();
    let num_m = number(n_m).kronecker(&ic).kronecker(&ia);
    let num_c = im.kronecker(&number(n_c)).kronecker(&ia);
    let num_a = &sp * &sigma_minus;

    let real = |x: f64| Complex64::new(x, 0.0);
    let h_fixed = &num_m * real(params.omega_m) - &num_c * real(params.delta_c)
        - &num_a * real(params.delta_a)
        + (&a + &ad) * real(params.eta)
        - (&bd + &b) * &num_c * real(params.g_mc);
    let corr_op = &ad * &sigma_minus;
    let h_ac = &corr_op + &a * &sp;

    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let x_m_op = (&b + &bd) * real(inv_sqrt2);
    let p_m_op = (&b - &bd) * Complex64::new(0.0, -inv_sqrt2);

    let diag = |m: &CMatrix| (0..dim).map(|i| m[(i, i)].re).collect::<Vec<_>>();
    let sparse = SparseOps {
        x_m: CsrMatrix::from_dense(&x_m_op),
        p_m: CsrMatrix::from_dense(&p_m_op),
        corr: CsrMatrix::from_dense(&corr_op),
        b: LadderOp::from_dense(&b),
        a: LadderOp::from_dense(&a),
        sigma_minus: LadderOp::from_dense(&sigma_minus),
        num_m: diag(&num_m),
        num_c: diag(&num_c),
        num_a: diag(&num_a),
    };

    Ok(OperatorSet {
        n_m,
        n_c,
        dim,
        b,
        a,
        sigma_minus,
        num_m,
        num_c,
        num_a,
        h_fixed,
        h_ac,
        x_m_op,
        p_m_op,
        corr_op,
        sparse,
    })
}

/// Full Hamiltonian at classical atom position `x`:
/// `h_fixed + g_ac sin(2x) h_ac`.
pub fn hamiltonian(ops: &OperatorSet, g_ac: f64, x: f64) -> CMatrix {
    let s = g_ac * (2.0 * x).sin();
    let mut h = ops.h_fixed.clone();
    if s != 0.0 {
        h.zip_apply(&ops.h_ac, |hv, acv| *hv += acv * s);
    }
    h
}

impl OperatorSet {
    /// Flat basis index of a Fock label.
    pub fn index_of(&self, label: FockLabel) -> Result<usize> {
        label.index(self.n_m, self.n_c)
    }

    /// Pure Fock-product ket.
    pub fn fock_ket(&self, label: FockLabel) -> Result<Vec<Complex64>> {
        let mut psi = vec![ZERO; self.dim];
        psi[self.index_of(label)?] = ONE;
        Ok(psi)
    }

    /// Fock-product density matrix `|label⟩⟨label|`.
    pub fn fock_density(&self, label: FockLabel) -> Result<CMatrix> {
        let mut rho = CMatrix::zeros(self.dim, self.dim);
        let i = self.index_of(label)?;
        rho[(i, i)] = ONE;
        Ok(rho)
    }

    /// Population in the highest membrane and cavity Fock levels.
    pub fn top_level_populations(&self, rho: &CMatrix) -> (f64, f64) {
        let (mut top_m, mut top_c) = (0.0, 0.0);
        for m in 0..self.n_m {
            for c in 0..self.n_c {
                for a in 0..2 {
                    let i = (m * self.n_c + c) * 2 + a;
                    let p = rho[(i, i)].re;
                    if m == self.n_m - 1 {
                        top_m += p;
                    }
                    if c == self.n_c - 1 {
                        top_c += p;
                    }
                }
            }
        }
        (top_m, top_c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> OperatorSet {
        let p = SystemParams { n_m: 3, n_c: 4, ..SystemParams::default() };
        build_operators(&p).unwrap()
    }

    fn comm(x: &CMatrix, y: &CMatrix) -> CMatrix {
        x * y - y * x
    }

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn dimension_and_atom_spectrum() {
        let p = SystemParams { n_m: 2, n_c: 2, ..SystemParams::default() };
        let ops = build_operators(&p).unwrap();
        assert_eq!(ops.dim, 8);
        let diag: Vec<f64> = (0..8).map(|i| ops.num_a[(i, i)].re).collect();
        assert_eq!(diag.iter().filter(|&&v| v == 1.0).count(), 4);
        assert_eq!(diag.iter().filter(|&&v| v == 0.0).count(), 4);
        assert_eq!(max_abs(&(ops.num_a.clone() - CMatrix::from_diagonal(&ops.num_a.diagonal()))), 0.0);
    }

    #[test]
    fn h_fixed_is_exactly_hermitian() {
        let ops = small();
        assert_eq!(hermiticity_residual(&ops.h_fixed), 0.0);
        assert_eq!(hermiticity_residual(&ops.h_ac), 0.0);
        assert_eq!(hermiticity_residual(&ops.x_m_op), 0.0);
        assert_eq!(hermiticity_residual(&ops.p_m_op), 0.0);
    }

    #[test]
    fn truncated_ladder_algebra() {
        let bm = destroy(3);
        let num = bm.adjoint() * &bm;
        assert!((num[(2, 2)].re - 2.0).abs() < 1e-15);
        assert_eq!(number(3)[(2, 2)].re, 2.0);
        let c = comm(&bm, &bm.adjoint());
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j && i < 2 { ONE } else { ZERO };
                if (i, j) != (2, 2) {
                    assert!((c[(i, j)] - expected).norm() < 1e-15, "entry ({i},{j})");
                }
            }
        }
        assert!((c[(2, 2)].re + 2.0).abs() < 1e-15);
    }

    #[test]
    fn atom_anticommutator_is_identity() {
        let ops = small();
        let sp = ops.sigma_minus.adjoint();
        let anti = &ops.sigma_minus * &sp + &sp * &ops.sigma_minus;
        assert_eq!(anti, CMatrix::identity(ops.dim, ops.dim));
    }

    #[test]
    fn operators_on_different_factors_commute() {
        let ops = small();
        let bd = ops.b.adjoint();
        let ad = ops.a.adjoint();
        for (x, y) in [
            (&ops.b, &ops.a),
            (&ops.b, &ops.sigma_minus),
            (&ops.a, &ops.sigma_minus),
            (&bd, &ops.a),
            (&ops.b, &ad),
            (&ops.num_m, &ops.num_c),
        ] {
            assert_eq!(max_abs(&comm(x, y)), 0.0);
        }
    }

    #[test]
    fn jaynes_cummings_term_conserves_excitations() {
        let ops = small();
        let total = &ops.num_c + &ops.num_a;
        assert!(max_abs(&comm(&ops.h_ac, &total)) < 1e-14);
    }

    #[test]
    fn hamiltonian_mode_function() {
        let ops = small();
        assert_eq!(hamiltonian(&ops, 2.0, 0.0), ops.h_fixed);
        let h = hamiltonian(&ops, 2.0, std::f64::consts::FRAC_PI_4);
        let expected = &ops.h_fixed + &ops.h_ac * Complex64::new(2.0, 0.0);
        assert!(max_abs(&(h - expected)) < 1e-15);
        for k in 0..20 {
            let x = -std::f64::consts::PI + 0.31 * k as f64;
            assert!(hermiticity_residual(&hamiltonian(&ops, 1.7, x)) < 1e-12);
        }
    }

    #[test]
    fn dimension_cap_guard() {
        let p = SystemParams { n_m: 40, n_c: 40, ..SystemParams::default() };
        assert!(matches!(build_operators(&p), Err(SimError::DimensionCap { dim: 3200, .. })));
        let p = SystemParams { n_m: 2, n_c: 2, ..SystemParams::default() };
        assert!(build_operators_with_cap(&p, 4).is_err());
    }

    #[test]
    fn sparse_mirrors_agree_with_dense() {
        let ops = small();
        let psi: Vec<Complex64> = (0..ops.dim)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let v = nalgebra::DVector::from_column_slice(&psi);
        let dense = &ops.h_fixed * &v;
        let mut out = vec![ZERO; ops.dim];
        CsrMatrix::from_dense(&ops.h_fixed).mul_vec(&psi, &mut out);
        for i in 0..ops.dim {
            assert!((dense[i] - out[i]).norm() < 1e-12);
        }
        let dense_b = &ops.b * &v;
        ops.sparse.b.apply(&psi, &mut out);
        for i in 0..ops.dim {
            assert!((dense_b[i] - out[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn fock_label_parsing_and_indexing() {
        assert_eq!(FockLabel::parse("100").unwrap(), FockLabel::new(1, 0, 0));
        assert_eq!(FockLabel::parse("|110>").unwrap(), FockLabel::new(1, 1, 0));
        assert_eq!(FockLabel::parse("2, 11, 1").unwrap(), FockLabel::new(2, 11, 1));
        assert!(FockLabel::parse("12").is_err());
        assert_eq!(FockLabel::new(1, 2, 1).index(3, 4).unwrap(), (4 + 2) * 2 + 1);
        assert!(FockLabel::new(3, 0, 0).index(3, 4).is_err());
    }
}
