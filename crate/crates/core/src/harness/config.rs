use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_analysis::W2Convention;
use crate::integrators::SamplerKind;
use crate::potentials::{LocallyNonconvexPotential, Potential, QuadraticPotential};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "LANGEVIN_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Quadratic,
    LocallyNonconvex,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// `γ = 2`, `ξ = 2L_G`, step size and `K` from the potential's constants.
    #[default]
    #[serde(rename = "paper", alias = "derived")]
    Derived,
    /// `h` and `k` taken from the config.
    Manual,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticsMode {
    #[default]
    ExactGaussian,
    SampleMoments,
}

/// Initial momentum law; the position always starts at `N(0, I/L_G)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumInit {
    /// `r₀ ~ N(0, I/L_G)`.
    #[default]
    Algorithm,
    /// `r₀ ~ N(0, I/ξ)`, the stationary momentum law.
    Lemma,
}

fn default_chains() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

/// Flat run description; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialKind,
    #[serde(default)]
    pub spectrum: Option<Vec<f64>>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub m: Option<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    pub sampler: SamplerKind,
    #[serde(default)]
    pub schedule: ScheduleMode,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub k: Option<u64>,
    pub epsilon: f64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub diagnostics: DiagnosticsMode,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub leapfrog_steps: Option<usize>,
    #[serde(default)]
    pub refresh: Option<f64>,
    #[serde(default)]
    pub momentum_init: MomentumInit,
    #[serde(default)]
    pub w2_convention: W2Convention,
    /// Stop once `kl_joint ≤ ε`.
    #[serde(default = "default_true")]
    pub stop_at_epsilon: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and applies the `LANGEVIN_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not a u64")))?;
        }
        Ok(())
    }

    pub fn build_potential(&self) -> Result<Box<dyn Potential<f64>>> {
        let missing = |k: &str| Error::Config(format!("missing field `{k}` for {:?} potential", self.potential));
        match self.potential {
            PotentialKind::Quadratic => {
                let q = match (&self.spectrum, self.d, self.kappa) {
                    (Some(s), None, None) => QuadraticPotential::from_spectrum(s.clone()),
                    (None, Some(d), Some(k)) => QuadraticPotential::log_spaced(d, k),
                    _ => return Err(Error::Config("quadratic potential needs `spectrum` or both `d` and `kappa`".into())),
                }
                .map_err(|e| Error::Config(e.to_string()))?;
                Ok(Box::new(q))
            }
            PotentialKind::LocallyNonconvex => {
                let d = self.d.ok_or_else(|| missing("d"))?;
                let m = self.m.ok_or_else(|| missing("m"))?;
                let r = self.radius.ok_or_else(|| missing("radius"))?;
                let a = self.a.ok_or_else(|| missing("a"))?;
                let s = self.s.ok_or_else(|| missing("s"))?;
                let p = LocallyNonconvexPotential::new(d, m, r, a, s).map_err(|e| Error::Config(e.to_string()))?;
                Ok(Box::new(p))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("`epsilon` must be positive".into()));
        }
        if self.schedule == ScheduleMode::Manual && (self.h.is_none() || self.k.is_none()) {
            return Err(Error::Config("manual schedule needs `h` and `k`".into()));
        }
        if self.diagnostics == DiagnosticsMode::SampleMoments && self.chains < 2 {
            return Err(Error::Config("sample-moments mode needs at least two chains".into()));
        }
        if self.diagnostics == DiagnosticsMode::ExactGaussian && self.potential != PotentialKind::Quadratic {
            return Err(Error::NotQuadratic);
        }
        for (name, v) in [("gamma", self.gamma), ("xi", self.xi), ("h", self.h)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Config(format!("`{name}` must be positive and finite")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{"potential":"quadratic","spectrum":[1.0],"sampler":"em","epsilon":0.1,"bogus":1}"#;
        assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))));
    }

    #[test]
    fn defaults_fill_in() {
        let text = r#"{"potential":"quadratic","d":3,"kappa":9.0,"sampler":"underdamped","epsilon":0.1}"#;
        let c = RunConfig::from_json(text).unwrap();
        assert_eq!(c.schedule, ScheduleMode::Derived);
        assert_eq!(c.diagnostics, DiagnosticsMode::ExactGaussian);
        assert_eq!(c.momentum_init, MomentumInit::Algorithm);
        assert_eq!(c.chains, 1000);
        assert_eq!(c.build_potential().unwrap().dim(), 3);
    }

    #[test]
    fn exact_mode_needs_quadratic() {
        let text = r#"{"potential":"locally_nonconvex","d":1,"m":1.0,"radius":1.0,"a":1.0,"s":0.5,
                      "sampler":"underdamped","epsilon":0.1}"#;
        let c = RunConfig::from_json(text).unwrap();
        assert!(matches!(c.validate(), Err(Error::NotQuadratic)));
    }
}
