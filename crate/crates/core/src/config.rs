//! Run configuration, read from TOML.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Command-line flags override file values.
//!
//! ```toml
//! n = 100
//! f = 10
//! d = 20
//! mu = 1.0
//! L = 1.0
//! sigma = 0.05
//! r = 0.05
//! # eta = 0.004      # default: beta/gamma for b = f
//! rounds = 200
//! seed = 7
//! replicas = 50
//! hessian_spectrum = "isotropic"   # or "two_point", "linear"
//! rotate = false
//! byzantine_slots = [0, 1, 2]      # default: the first f ids
//!
//! [adversary]
//! kind = "large_norm"
//! scale = 1000.0
//!
//! [sweep]
//! axis = "sigma"
//! start = 0.0
//! end = 0.2
//! points = 50
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::SpectrumMode;
use crate::protocol::AdversaryKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Sigma,
    #[serde(alias = "mu-over-l")]
    MuOverL,
    X,
    N,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Sigma => "sigma",
            SweepAxis::MuOverL => "mu_over_L",
            SweepAxis::X => "x",
            SweepAxis::N => "n",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Sigma,
            start: 0.0,
            end: 0.2,
            points: 50,
        }
    }
}

impl SweepConfig {
    /// Evenly spaced grid from `start` to `end` inclusive.
    pub fn grid(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            p => (0..p)
                .map(|i| {
                    if i + 1 == p {
                        self.end
                    } else {
                        self.start + (self.end - self.start) * i as f64 / (p - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub f: usize,
    pub d: usize,
    pub mu: f64,
    #[serde(rename = "L", alias = "l")]
    pub l: f64,
    pub sigma: f64,
    pub r: f64,
    pub eta: Option<f64>,
    pub rounds: usize,
    pub seed: u64,
    pub replicas: usize,
    pub adversary: AdversaryKind,
    pub byzantine_slots: Option<Vec<usize>>,
    pub hessian_spectrum: SpectrumMode,
    pub rotate: bool,
    pub bits_per_scalar: Option<u32>,
    pub header_bits: Option<u32>,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 100,
            f: 10,
            d: 20,
            mu: 1.0,
            l: 1.0,
            sigma: 0.05,
            r: 0.05,
            eta: None,
            rounds: 200,
            seed: 0,
            replicas: 1,
            adversary: AdversaryKind::None,
            byzantine_slots: None,
            hessian_spectrum: SpectrumMode::Isotropic,
            rotate: false,
            bits_per_scalar: None,
            header_bits: None,
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Ids of the Byzantine workers: the configured slots, or the first `f`
    /// ids when an adversary is set without explicit slots.
    pub fn byzantine_ids(&self) -> Vec<usize> {
        if self.adversary == AdversaryKind::None {
            return Vec::new();
        }
        match &self.byzantine_slots {
            Some(slots) => slots.clone(),
            None => (0..self.f).collect(),
        }
    }

    /// Structural checks; convergence conditions are left to the theory
    /// module's feasibility report.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.n == 0 || self.d == 0 {
            return invalid(format!(
                "n and d must be positive (n = {}, d = {})",
                self.n, self.d
            ));
        }
        if self.n <= 2 * self.f {
            return invalid(format!("need n > 2f (n = {}, f = {})", self.n, self.f));
        }
        if self.replicas == 0 {
            return invalid("replicas must be positive".into());
        }
        if !(self.mu > 0.0) || !(self.l >= self.mu) || !self.l.is_finite() {
            return invalid(format!(
                "need 0 < mu <= L (mu = {}, L = {})",
                self.mu, self.l
            ));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return invalid(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return invalid(format!("r must be positive, got {}", self.r));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return invalid(format!("eta must be positive, got {eta}"));
            }
        }
        let ids = self.byzantine_ids();
        if ids.len() > self.f {
            return invalid(format!(
                "{} Byzantine slots exceed f = {}",
                ids.len(),
                self.f
            ));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.n) {
            return invalid(format!("Byzantine slot {id} out of range (n = {})", self.n));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return invalid("duplicate Byzantine slots".into());
        }
        if self.bits_per_scalar == Some(0) {
            return invalid("bits_per_scalar must be positive".into());
        }
        Ok(())
    }
}
