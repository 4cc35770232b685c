use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Couplings above this ratio are outside the validated weak-coupling window.
pub const VALIDATED_MAX_COUPLING: f64 = 0.12;

/// Extra photon levels above `n_tls` kept by default.
pub const DEFAULT_CUTOFF_MARGIN: usize = 6;

const RESONANCE_TOL: f64 = 1e-12;

/// Physical parameters of one model instance, in units of a reference frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_m: f64,
    pub omega_c: f64,
    pub g: f64,
    pub n_tls: usize,
    pub photon_cutoff: usize,
}

impl ModelParams {
    /// Builds validated parameters with the default cutoff `n_tls + 6`.
    pub fn new(omega_m: f64, omega_c: f64, g: f64, n_tls: usize) -> Result<Self> {
        let p = Self {
            omega_m,
            omega_c,
            g,
            n_tls,
            photon_cutoff: n_tls + DEFAULT_CUTOFF_MARGIN,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn resonant(omega: f64, g: f64, n_tls: usize) -> Result<Self> {
        Self::new(omega, omega, g, n_tls)
    }

    pub fn with_cutoff(mut self, photon_cutoff: usize) -> Self {
        self.photon_cutoff = photon_cutoff;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    /// Changes N and resets the cutoff to the default policy.
    pub fn with_n_tls(mut self, n_tls: usize) -> Self {
        self.n_tls = n_tls;
        self.photon_cutoff = n_tls + DEFAULT_CUTOFF_MARGIN;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_m.is_finite() && self.omega_m > 0.0) {
            return Err(Error::InvalidParams(format!("omega_m must be > 0, got {}", self.omega_m)));
        }
        if !(self.omega_c.is_finite() && self.omega_c > 0.0) {
            return Err(Error::InvalidParams(format!("omega_c must be > 0, got {}", self.omega_c)));
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::InvalidParams(format!("g must be >= 0, got {}", self.g)));
        }
        if self.n_tls == 0 {
            return Err(Error::InvalidParams("n_tls must be >= 1".into()));
        }
        Ok(())
    }

    /// Cutoff below `n_tls + 2` is allowed but flagged; the dynamics layer
    /// reports whether it actually converged.
    pub fn meets_cutoff_policy(&self) -> bool {
        self.photon_cutoff >= self.n_tls + 2
    }

    pub fn detuning(&self) -> f64 {
        self.omega_c - self.omega_m
    }

    pub fn is_resonant(&self) -> bool {
        self.detuning().abs() <= RESONANCE_TOL * self.omega_c.max(self.omega_m)
    }

    pub fn require_resonance(&self) -> Result<f64> {
        if self.is_resonant() {
            Ok(self.omega_c)
        } else {
            Err(Error::OffResonance { detuning: self.detuning() })
        }
    }

    /// Basis dimension (N+1)(n_max+1).
    pub fn dim(&self) -> usize {
        (self.n_tls + 1) * (self.photon_cutoff + 1)
    }

    pub(crate) fn warn_if_strong(&self) {
        let ratio = self.g / self.omega_c.min(self.omega_m);
        if ratio > VALIDATED_MAX_COUPLING {
            log::warn!(
                "g/omega = {ratio:.4} exceeds the validated weak-coupling window ({VALIDATED_MAX_COUPLING})"
            );
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tc,
    Dm,
    Pf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Tc, ModelKind::Dm, ModelKind::Pf];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Tc => "tc",
            ModelKind::Dm => "dm",
            ModelKind::Pf => "pf",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Tc => "TC",
            ModelKind::Dm => "DM",
            ModelKind::Pf => "PF",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tc" => Ok(ModelKind::Tc),
            "dm" => Ok(ModelKind::Dm),
            "pf" => Ok(ModelKind::Pf),
            other => Err(Error::InvalidParams(format!("unknown model '{other}' (expected tc, dm or pf)"))),
        }
    }
}
