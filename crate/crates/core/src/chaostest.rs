//! 0-1 test for chaos and the regular-phase amplitude test.
//!
//! The translation components follow the phase recursion
//! `θ(n+1) = ν + θ(n) + φ(n)`; the classic fixed-increment form
//! `θ(n+1) = ν + θ(n)` is available through [`ThetaUpdate::Classic`].
//! Inside step `n` the pre-update angle `θ(n)` is used.

use std::f64::consts::PI;
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::ObservableSeries;
use crate::error::{Result, SimError};
use crate::par;

/// Minimum φ-series length accepted by [`zero_one_test`].
pub const MIN_SERIES_LEN: usize = 100;

/// Dynamical phase. Displayed with the diagram labels I / II / III.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Regular,
    TimeCrystal,
    Chaotic,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Regular => "I",
            Phase::TimeCrystal => "II",
            Phase::Chaotic => "III",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Phase::Regular => "Regular",
            Phase::TimeCrystal => "TimeCrystal",
            Phase::Chaotic => "Chaotic",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Phase {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "Regular" => Ok(Phase::Regular),
            "II" | "TimeCrystal" => Ok(Phase::TimeCrystal),
            "III" | "Chaotic" => Ok(Phase::Chaotic),
            other => Err(SimError::InvalidInput(format!("unknown phase label `{other}`"))),
        }
    }
}

/// How the angle of the translation components advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaUpdate {
    /// `θ(n+1) = ν + θ(n) + φ(n)`.
    #[default]
    Phase,
    /// `θ(n+1) = ν + θ(n)`.
    Classic,
}

/// Translation-component sequences, each of length `N + 1` starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationComponents {
    pub x_ac: Vec<f64>,
    pub p_ac: Vec<f64>,
    pub theta_c: Vec<f64>,
}

pub fn translation_components(phi: &[f64], nu: f64) -> Result<TranslationComponents> {
    translation_components_with(phi, nu, ThetaUpdate::Phase)
}

pub fn translation_components_with(phi: &[f64], nu: f64, update: ThetaUpdate) -> Result<TranslationComponents> {
    if let Some(index) = phi.iter().position(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { index });
    }
    let n = phi.len();
    let mut x_ac = Vec::with_capacity(n + 1);
    let mut p_ac = Vec::with_capacity(n + 1);
    let mut theta_c = Vec::with_capacity(n + 1);
    let (mut x, mut p, mut th) = (0.0f64, 0.0f64, 0.0f64);
    x_ac.push(x);
    p_ac.push(p);
    theta_c.push(th);
    for &f in phi {
        p += f * th.cos();
        x += f * th.sin();
        th += nu
            + match update {
                ThetaUpdate::Phase => f,
                ThetaUpdate::Classic => 0.0,
            };
        x_ac.push(x);
        p_ac.push(p);
        theta_c.push(th);
    }
    Ok(TranslationComponents { x_ac, p_ac, theta_c })
}

/// Finite-sample mean-square displacement, indexed by lag `n = 0..=n_max`:
/// `M(n) = 1/(L−n) Σ_j [p(j+n)−p(j)]² + [x(j+n)−x(j)]²` over all `L − n`
/// available pairs.
pub fn mean_square_displacement(x_ac: &[f64], p_ac: &[f64], n_max: usize) -> Result<Vec<f64>> {
    if x_ac.len() != p_ac.len() {
        return Err(SimError::InvalidInput(format!(
            "translation components differ in length ({} vs {})",
            x_ac.len(),
            p_ac.len()
        )));
    }
    let len = x_ac.len();
    if n_max >= len {
        return Err(SimError::InvalidInput(format!("n_max = {n_max} must be below the series length {len}")));
    }
    let mut m = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let pairs = len - n;
        let s: f64 = (0..pairs)
            .map(|j| {
                let dp = p_ac[j + n] - p_ac[j];
                let dx = x_ac[j + n] - x_ac[j];
                dp * dp + dx * dx
            })
            .sum();
        m.push(s / pairs as f64);
    }
    Ok(m)
}

/// Oscillation-corrected displacement `D(n) = M(n) − E_φ² (1 − cos nν)/(1 − cos ν)`.
pub fn corrected_msd(m_c: &[f64], phi: &[f64], nu: f64) -> Result<Vec<f64>> {
    let denom = 1.0 - nu.cos();
    if denom < 1e-12 {
        return Err(SimError::SingularAngle { nu });
    }
    if phi.is_empty() {
        return Err(SimError::InvalidInput("empty φ series".into()));
    }
    let mean = phi.iter().sum::<f64>() / phi.len() as f64;
    let e2 = mean * mean;
    Ok(m_c
        .iter()
        .enumerate()
        .map(|(n, &m)| m - e2 * (1.0 - (n as f64 * nu).cos()) / denom)
        .collect())
}

/// A growth-rate estimate and whether it needed a fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub value: f64,
    /// Regression: some `M(n) <= 0` was floored at 1e-300.
    /// Correlation: a variance vanished and the value was forced to 0.
    pub flagged: bool,
}

/// Least-squares slope of `log M(n)` against `log n` over `fit_range`
/// (lags, inclusive). `m_c` is indexed by lag.
pub fn k_regression(m_c: &[f64], fit_range: RangeInclusive<usize>) -> Result<KEstimate> {
    let (lo, hi) = (*fit_range.start(), *fit_range.end());
    if lo < 1 || hi <= lo || hi >= m_c.len() {
        return Err(SimError::InvalidInput(format!(
            "fit range {lo}..={hi} invalid for {} lags",
            m_c.len().saturating_sub(1)
        )));
    }
    let mut flagged = false;
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .map(|n| {
            let m = if m_c[n] > 0.0 {
                m_c[n]
            } else {
                flagged = true;
                1e-300
            };
            ((n as f64).ln(), m.ln())
        })
        .collect();
    let q = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / q;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / q;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(KEstimate { value: sxy / sxx, flagged })
}

/// Correlation coefficient between `ξ = (1..n_cut)` and `Δ = (D(1)..D(n_cut))`.
/// `d_c` is indexed by lag.
pub fn k_correlation(d_c: &[f64], n_cut: usize) -> Result<KEstimate> {
    if n_cut < 2 || n_cut >= d_c.len() {
        return Err(SimError::InvalidInput(format!(
            "n_cut = {n_cut} invalid for {} lags",
            d_c.len().saturating_sub(1)
        )));
    }
    let delta = &d_c[1..=n_cut];
    let q = n_cut as f64;
    let mean_xi = (q + 1.0) / 2.0;
    let mean_d = delta.iter().sum::<f64>() / q;
    let mut cov = 0.0;
    let mut var_d = 0.0;
    let mut var_xi = 0.0;
    for (k, &d) in delta.iter().enumerate() {
        let xi = (k + 1) as f64 - mean_xi;
        let dd = d - mean_d;
        cov += xi * dd;
        var_d += dd * dd;
        var_xi += xi * xi;
    }
    let scale = delta.iter().map(|d| d * d).sum::<f64>();
    if var_d <= 1e-24 * scale || var_d == 0.0 {
        return Ok(KEstimate { value: 0.0, flagged: true });
    }
    let k = cov / (var_xi * var_d).sqrt();
    Ok(KEstimate { value: k.clamp(-1.0, 1.0), flagged: false })
}

/// Full 0-1 test output at one angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosMetrics {
    pub nu: f64,
    pub x_ac: Vec<f64>,
    pub p_ac: Vec<f64>,
    pub theta_c: Vec<f64>,
    pub m_c: Vec<f64>,
    pub d_c: Vec<f64>,
    pub k_regression: KEstimate,
    pub k_correlation: KEstimate,
}

/// Runs translation components, displacement, correction and both estimators
/// at angle `nu` with cut-off `n_cut`.
pub fn chaos_metrics(phi: &[f64], nu: f64, n_cut: usize, update: ThetaUpdate) -> Result<ChaosMetrics> {
    let tc = translation_components_with(phi, nu, update)?;
    let m_c = mean_square_displacement(&tc.x_ac, &tc.p_ac, n_cut)?;
    let d_c = corrected_msd(&m_c, phi, nu)?;
    let k_regression = k_regression(&m_c, 2.min(n_cut - 1).max(1)..=n_cut)?;
    let k_correlation = k_correlation(&d_c, n_cut)?;
    Ok(ChaosMetrics {
        nu,
        x_ac: tc.x_ac,
        p_ac: tc.p_ac,
        theta_c: tc.theta_c,
        m_c,
        d_c,
        k_regression,
        k_correlation,
    })
}

/// How test angles are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NuPolicy {
    /// One fixed angle.
    Single { nu: f64 },
    /// `draws` angles uniform in `(lo, hi)`; the median K is reported.
    Median { draws: usize, lo: f64, hi: f64 },
}

impl Default for NuPolicy {
    fn default() -> Self {
        NuPolicy::Median { draws: 16, lo: PI / 5.0, hi: 4.0 * PI / 5.0 }
    }
}

impl NuPolicy {
    pub fn angles(&self, seed: u64) -> Result<Vec<f64>> {
        match *self {
            NuPolicy::Single { nu } => {
                if !(nu > 0.0 && nu < PI) {
                    return Err(SimError::InvalidInput(format!("ν = {nu} outside (0, π)")));
                }
                Ok(vec![nu])
            }
            NuPolicy::Median { draws, lo, hi } => {
                if draws == 0 || !(lo > 0.0 && hi < PI && lo < hi) {
                    return Err(SimError::InvalidInput(format!(
                        "ν range ({lo}, {hi}) with {draws} draws is not inside (0, π)"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..draws).map(|_| rng.random_range(lo..hi)).collect())
            }
        }
    }
}

/// Per-angle estimator values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuEstimate {
    pub nu: f64,
    pub k_regression: KEstimate,
    pub k_correlation: KEstimate,
}

/// Aggregate 0-1 test result over the angle policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroOneResult {
    pub per_nu: Vec<NuEstimate>,
    /// Median of the correlation estimator.
    pub k_median: f64,
    /// Median of the regression estimator.
    pub k_regression_median: f64,
    pub n_cut: usize,
}

/// Settings shared by [`zero_one_test`] and [`classify_phase`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosConfig {
    pub nu_policy: NuPolicy,
    pub theta_update: ThetaUpdate,
    /// Spacing of φ samples in simulated time.
    pub sample_interval: f64,
    /// Leading fraction of the run discarded before either test.
    pub transient_fraction: f64,
    /// `n_cut = N * n_cut_fraction`.
    pub n_cut_fraction: f64,
    /// Median correlation K above which a non-regular run is chaotic.
    pub k_threshold: f64,
    /// Trailing fraction of the run used by the amplitude test.
    pub regular_window: f64,
    /// Fixed ε; `None` selects `1e-3 · max(1, mean)`.
    pub epsilon: Option<f64>,
    /// Observable for the amplitude test: `n_m`, `n_c` or `n_a`.
    pub regular_observable: String,
    pub seed: u64,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        ChaosConfig {
            nu_policy: NuPolicy::default(),
            theta_update: ThetaUpdate::Phase,
            sample_interval: 1.0,
            transient_fraction: 0.5,
            n_cut_fraction: 0.1,
            k_threshold: 0.5,
            regular_window: 0.25,
            epsilon: None,
            regular_observable: "n_c".into(),
            seed: 0,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// 0-1 test of `phi` over the configured angles.
pub fn zero_one_test(phi: &[f64], config: &ChaosConfig) -> Result<ZeroOneResult> {
    if phi.len() < MIN_SERIES_LEN {
        return Err(SimError::SeriesTooShort { len: phi.len(), min: MIN_SERIES_LEN });
    }
    let n_cut = ((phi.len() as f64 * config.n_cut_fraction) as usize).max(3);
    let angles = config.nu_policy.angles(config.seed)?;
    let per_nu = par::map(&angles, |&nu| {
        chaos_metrics(phi, nu, n_cut, config.theta_update).map(|m| NuEstimate {
            nu,
            k_regression: m.k_regression,
            k_correlation: m.k_correlation,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut kc: Vec<f64> = per_nu.iter().map(|e| e.k_correlation.value).collect();
    let mut kr: Vec<f64> = per_nu.iter().map(|e| e.k_regression.value).collect();
    Ok(ZeroOneResult { k_median: median(&mut kc), k_regression_median: median(&mut kr), per_nu, n_cut })
}

/// Amplitude test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularTest {
    pub r_value: f64,
    pub epsilon: f64,
    pub regular: bool,
}

/// `R = max − min` of `values` with threshold `epsilon` (or the relative
/// default `1e-3 · max(1, mean)`).
pub fn regular_test_values(values: &[f64], epsilon: Option<f64>) -> Result<RegularTest> {
    if values.is_empty() {
        return Err(SimError::InvalidInput("empty window for the regular test".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let epsilon = epsilon.unwrap_or(1e-3 * mean.max(1.0));
    let r_value = max - min;
    Ok(RegularTest { r_value, epsilon, regular: r_value < epsilon })
}

/// Amplitude test over the last `window_fraction` of `series`.
pub fn regular_test(
    series: &ObservableSeries,
    window_fraction: f64,
    epsilon: Option<f64>,
    observable: &str,
) -> Result<RegularTest> {
    if !matches!(observable, "n_m" | "n_c" | "n_a") {
        return Err(SimError::InvalidInput(format!("regular test observable must be n_m, n_c or n_a, got `{observable}`")));
    }
    let column = series.column(observable).expect("checked above");
    let start = series.tail_start(window_fraction);
    regular_test_values(&column[start..], epsilon)
}

/// `φ(n) = x(n) + p(n)` of the classical atom after the transient, sampled
/// every `interval` of simulated time.
pub fn phi_series(series: &ObservableSeries, transient_fraction: f64, interval: f64) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(SimError::SeriesTooShort { len: series.len(), min: 2 });
    }
    let spacing = series.times[1] - series.times[0];
    let stride = ((interval / spacing).round() as usize).max(1);
    let start = series.tail_start(1.0 - transient_fraction);
    Ok((start..series.len()).step_by(stride).map(|i| series.x[i] + series.p[i]).collect())
}

/// Complete classification of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub regular: RegularTest,
    pub zero_one: ZeroOneResult,
    pub phase: Phase,
}

impl Classification {
    pub fn r_value(&self) -> f64 {
        self.regular.r_value
    }

    pub fn k_median(&self) -> f64 {
        self.zero_one.k_median
    }

    /// Summary CSV: `r_value,k_median,phase`.
    pub fn summary_csv(&self) -> String {
        format!("r_value,k_median,phase\n{},{},{}\n", self.regular.r_value, self.zero_one.k_median, self.phase.name())
    }

    /// Per-angle CSV: `nu,k_regression,k_correlation`.
    pub fn per_nu_csv(&self) -> String {
        let mut s = String::from("nu,k_regression,k_correlation\n");
        for e in &self.zero_one.per_nu {
            s.push_str(&format!("{},{},{}\n", e.nu, e.k_regression.value, e.k_correlation.value));
        }
        s
    }
}

/// Regular if the amplitude test passes; otherwise chaotic when the median
/// correlation K exceeds the threshold; otherwise time crystal.
pub fn classify_phase(series: &ObservableSeries, config: &ChaosConfig) -> Result<Classification> {
    let regular = regular_test(series, config.regular_window, config.epsilon, &config.regular_observable)?;
    let phi = phi_series(series, config.transient_fraction, config.sample_interval)?;
    let zero_one = zero_one_test(&phi, config)?;
    let phase = if regular.regular {
        Phase::Regular
    } else if zero_one.k_median > config.k_threshold {
        Phase::Chaotic
    } else {
        Phase::TimeCrystal
    };
    Ok(Classification { regular, zero_one, phase })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_components() {
        let tc = translation_components(&[0.0; 50], 1.1).unwrap();
        assert!(tc.x_ac.iter().chain(&tc.p_ac).all(|&v| v == 0.0));
        // θ still advances by ν per step.
        assert!((tc.theta_c[50] - 55.0).abs() < 1e-12);
    }

    #[test]
    fn hand_iterated_two_steps() {
        let nu = PI / 2.0;
        let tc = translation_components(&[1.0, 1.0], nu).unwrap();
        assert_eq!(tc.p_ac[0], 0.0);
        assert!((tc.p_ac[1] - 1.0).abs() < 1e-15);
        assert!((tc.p_ac[2] - (1.0 - 1f64.sin())).abs() < 1e-15);
        assert!((tc.p_ac[2] - 0.158529).abs() < 1e-6);
        assert_eq!(tc.x_ac[1], 0.0);
        assert!((tc.x_ac[2] - 1f64.cos()).abs() < 1e-15);
        assert!((tc.x_ac[2] - 0.540302).abs() < 1e-6);
        assert!((tc.theta_c[1] - (PI / 2.0 + 1.0)).abs() < 1e-15);
        assert!((tc.theta_c[2] - (PI + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_phi() {
        assert!(matches!(translation_components(&[1.0, f64::NAN], 1.0), Err(SimError::NonFinite { index: 1 })));
    }

    #[test]
    fn msd_closed_forms() {
        let c = vec![3.0; 200];
        assert!(mean_square_displacement(&c, &c, 20).unwrap().iter().all(|&m| m == 0.0));
        let p: Vec<f64> = (0..200).map(|j| j as f64).collect();
        let x = vec![0.0; 200];
        let m = mean_square_displacement(&x, &p, 20).unwrap();
        for (n, v) in m.iter().enumerate() {
            assert_eq!(*v, (n * n) as f64);
        }
        assert!(mean_square_displacement(&x, &p, 200).is_err());
    }

    #[test]
    fn corrected_msd_cases() {
        let m = vec![0.0, 1.0, 2.0];
        assert_eq!(corrected_msd(&m, &[1.0, -1.0], 1.0).unwrap(), m);
        assert!(matches!(corrected_msd(&m, &[1.0], 1e-7), Err(SimError::SingularAngle { .. })));
    }

    #[test]
    fn regression_slopes() {
        let lin: Vec<f64> = (0..=50).map(|n| n as f64).collect();
        assert!((k_regression(&lin, 2..=50).unwrap().value - 1.0).abs() < 1e-12);
        let flat = vec![7.0; 51];
        assert!(k_regression(&flat, 2..=50).unwrap().value.abs() < 1e-12);
        let mut with_zero = lin.clone();
        with_zero[10] = 0.0;
        assert!(k_regression(&with_zero, 2..=50).unwrap().flagged);
    }

    #[test]
    fn correlation_cases() {
        let lin: Vec<f64> = (0..=50).map(|n| 3.0 * n as f64).collect();
        let k = k_correlation(&lin, 50).unwrap();
        assert!((k.value - 1.0).abs() < 1e-12 && !k.flagged);
        let flat = vec![4.2; 51];
        assert_eq!(k_correlation(&flat, 50).unwrap(), KEstimate { value: 0.0, flagged: true });
    }

    #[test]
    fn regular_test_on_constant_and_sine() {
        let r = regular_test_values(&[2.0; 10], None).unwrap();
        assert_eq!(r.r_value, 0.0);
        assert!(r.regular);
        let vals: Vec<f64> = (0..=1000).map(|k| 2.0 + 0.5 * (2.0 * PI * k as f64 / 1000.0 + 0.3).sin()).collect();
        let r = regular_test_values(&vals, Some(0.5)).unwrap();
        assert!((r.r_value - 1.0).abs() < 1e-4);
        assert!(!r.regular);
    }

    #[test]
    fn angle_policy_is_seeded_and_in_range() {
        let p = NuPolicy::default();
        let a = p.angles(5).unwrap();
        assert_eq!(a, p.angles(5).unwrap());
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|&v| v > PI / 5.0 && v < 4.0 * PI / 5.0));
        assert!(NuPolicy::Single { nu: 0.0 }.angles(0).is_err());
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            zero_one_test(&[0.1; 50], &ChaosConfig::default()),
            Err(SimError::SeriesTooShort { len: 50, .. })
        ));
    }

    #[test]
    fn phase_labels_round_trip() {
        for p in [Phase::Regular, Phase::TimeCrystal, Phase::Chaotic] {
            assert_eq!(p.label().parse::<Phase>().unwrap(), p);
            assert_eq!(p.name().parse::<Phase>().unwrap(), p);
        }
    }

    #[test]
    fn classic_theta_separates_logistic_regimes() {
        let cfg = ChaosConfig { theta_update: ThetaUpdate::Classic, ..ChaosConfig::default() };
        let chaotic = zero_one_test(&crate::validation::logistic_series(3.97, 10_000), &cfg).unwrap();
        let periodic = zero_one_test(&crate::validation::logistic_series(3.55, 10_000), &cfg).unwrap();
        assert!((chaotic.k_median - 1.0).abs() < 0.1, "{}", chaotic.k_median);
        assert!(periodic.k_median.abs() < 0.1, "{}", periodic.k_median);
    }
}
