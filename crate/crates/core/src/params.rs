//! Physical rates and numerical controls. Every rate, detuning and depth is
//! expressed in units of the atomic decay rate, so `gamma_a` is normally 1.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Physical parameters and numerical controls of one hybrid run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    /// Membrane frequency.
    pub omega_m: f64,
    /// Cavity detuning (laser minus cavity).
    pub delta_c: f64,
    /// Atomic detuning (laser minus atom).
    pub delta_a: f64,
    /// Cavity drive strength.
    pub eta: f64,
    /// Optomechanical coupling.
    pub g_mc: f64,
    /// Atom-cavity coupling.
    pub g_ac: f64,
    pub gamma_m: f64,
    pub gamma_c: f64,
    pub gamma_a: f64,
    /// Depth of the lattice coupled to the membrane (`V0 sin^2 x`).
    pub v0: f64,
    /// Depth of the static potential (`V1 sin x`).
    pub v1: f64,
    /// Recoil frequency, `1 / (2m)`.
    pub omega_r: f64,
    /// Membrane Fock truncation.
    pub n_m: usize,
    /// Cavity Fock truncation.
    pub n_c: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Steps between recorded samples.
    pub record_stride: usize,
    pub x0: f64,
    pub p0: f64,
    pub seed: u64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            omega_m: 1.0,
            delta_c: -1.0,
            delta_a: -2.0,
            eta: 5.0,
            g_mc: 2.0,
            g_ac: 0.5,
            gamma_m: 2.0,
            gamma_c: 0.5,
            gamma_a: 1.0,
            v0: 20.0,
            v1: 40.0,
            omega_r: 1.0,
            n_m: 10,
            n_c: 20,
            dt: 5e-3,
            t_final: 200.0,
            record_stride: 20,
            x0: -1.0,
            p0: 0.0,
            seed: 0,
        }
    }
}

impl SystemParams {
    /// Base parameter set with the reduced truncation used by sweeps and the
    /// fast test suite.
    pub fn test_truncation() -> Self {
        SystemParams {
            n_m: 6,
            n_c: 12,
            ..Default::default()
        }
    }

    pub fn with_couplings(mut self, g_ac: f64, g_mc: f64) -> Self {
        self.g_ac = g_ac;
        self.g_mc = g_mc;
        self
    }

    /// Composite Hilbert-space dimension `n_m * n_c * 2`.
    pub fn dim(&self) -> usize {
        self.n_m * self.n_c * 2
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega_m", self.omega_m),
            ("delta_c", self.delta_c),
            ("delta_a", self.delta_a),
            ("eta", self.eta),
            ("g_mc", self.g_mc),
            ("g_ac", self.g_ac),
            ("gamma_m", self.gamma_m),
            ("gamma_c", self.gamma_c),
            ("gamma_a", self.gamma_a),
            ("v0", self.v0),
            ("v1", self.v1),
            ("omega_r", self.omega_r),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("x0", self.x0),
            ("p0", self.p0),
        ];
        for (key, value) in finite {
            if !value.is_finite() {
                return Err(invalid(key, format!("must be finite, got {value}")));
            }
        }
        // Zero decay rates are accepted so closed-system limits stay expressible.
        for (key, value) in [
            ("gamma_m", self.gamma_m),
            ("gamma_c", self.gamma_c),
            ("gamma_a", self.gamma_a),
            ("v0", self.v0),
            ("v1", self.v1),
        ] {
            if value < 0.0 {
                return Err(invalid(key, format!("must be >= 0, got {value}")));
            }
        }
        for (key, value) in [("omega_m", self.omega_m), ("omega_r", self.omega_r)] {
            if value <= 0.0 {
                return Err(invalid(key, format!("must be > 0, got {value}")));
            }
        }
        if self.n_m < 2 {
            return Err(invalid("n_m", format!("must be >= 2, got {}", self.n_m)));
        }
        if self.n_c < 2 {
            return Err(invalid("n_c", format!("must be >= 2, got {}", self.n_c)));
        }
        if self.dt <= 0.0 {
            return Err(invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.t_final <= self.dt {
            return Err(invalid(
                "t_final",
                format!("must exceed dt = {}, got {}", self.dt, self.t_final),
            ));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride", "must be >= 1".to_string()));
        }
        Ok(())
    }
}

fn invalid(key: &'static str, reason: String) -> SimError {
    SimError::InvalidParam { key, reason }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_the_base_point() {
        let p = SystemParams::default();
        p.validate().unwrap();
        assert_eq!(p.dim(), 400);
        assert_eq!((p.gamma_c, p.gamma_m, p.eta), (0.5, 2.0, 5.0));
        assert_eq!((p.v0, p.v1, p.omega_r), (20.0, 40.0, 1.0));
        assert_eq!((p.delta_c, p.delta_a), (-1.0, -2.0));
        assert_eq!(p.n_steps(), 40_000);
    }

    #[test]
    fn rejects_bad_truncation_and_times() {
        let p = SystemParams { n_m: 1, ..Default::default() };
        assert!(matches!(p.validate(), Err(SimError::InvalidParam { key: "n_m", .. })));
        let p = SystemParams { t_final: 1e-3, ..Default::default() };
        assert!(matches!(p.validate(), Err(SimError::InvalidParam { key: "t_final", .. })));
        let p = SystemParams { gamma_c: -0.1, ..Default::default() };
        assert!(p.validate().is_err());
        let p = SystemParams { v0: f64::NAN, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn couplings_and_detunings_may_be_negative() {
        let p = SystemParams::default().with_couplings(-1.0, -3.0);
        p.validate().unwrap();
    }
}
