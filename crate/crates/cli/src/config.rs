//! Model and scan configuration files.

use crate::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use staircase_core::staircase::{dyadic_ladder, golden_cf};
use staircase_core::{GeneratingModel, Harmonic};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    FrenkelKontorova,
    FourierPotential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: FamilyName,
    pub k: f64,
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSection {
    pub order: u32,
    #[serde(default)]
    pub cos_amp: f64,
    #[serde(default)]
    pub sin_amp: f64,
}

impl From<&HarmonicSection> for Harmonic {
    fn from(h: &HarmonicSection) -> Self {
        Harmonic { order: h.order, cos_amp: h.cos_amp, sin_amp: h.sin_amp }
    }
}

/// A standalone model file: `[model]` plus repeated `[[harmonic]]` and `[[interaction]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: ModelSection,
    #[serde(default)]
    pub harmonic: Vec<HarmonicSection>,
    #[serde(default)]
    pub interaction: Vec<HarmonicSection>,
}

impl ModelFile {
    pub fn build(&self) -> Result<GeneratingModel, CliError> {
        build_model(&self.model, &self.harmonic, &self.interaction)
    }
}

fn build_model(
    m: &ModelSection,
    harmonics: &[HarmonicSection],
    interaction: &[HarmonicSection],
) -> Result<GeneratingModel, CliError> {
    if !(m.k.is_finite() && m.k >= 0.0) {
        return Err(CliError::Config(format!("model.k must be finite and >= 0, got {}", m.k)));
    }
    let model = match m.family {
        FamilyName::FrenkelKontorova => {
            if !harmonics.is_empty() {
                return Err(CliError::Config("frenkel-kontorova takes no [[harmonic]] tables".into()));
            }
            if m.a.is_some_and(|a| a != 0.5) {
                return Err(CliError::Config("frenkel-kontorova fixes a = 0.5".into()));
            }
            GeneratingModel::frenkel_kontorova(m.k)
        }
        FamilyName::FourierPotential => {
            let a = m.a.ok_or_else(|| CliError::Config("fourier-potential requires model.a".into()))?;
            if harmonics.is_empty() {
                return Err(CliError::Config("fourier-potential requires at least one [[harmonic]]".into()));
            }
            let hs = harmonics.iter().map(Harmonic::from).collect();
            GeneratingModel::fourier_potential(m.k, a, hs).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    let model = if interaction.is_empty() {
        model
    } else {
        model.with_interaction(interaction.iter().map(Harmonic::from).collect())
    };
    model.check_twist(256).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(model)
}

fn default_h_hi() -> f64 {
    1.0
}
fn default_workers() -> usize {
    1
}
fn default_seed() -> u64 {
    0x5eed
}
fn default_points() -> usize {
    401
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub q_max: i64,
    #[serde(default)]
    pub h_lo: f64,
    #[serde(default = "default_h_hi")]
    pub h_hi: f64,
    /// Cohomology window; defaults to the gap between the end plateaus.
    pub c_lo: Option<f64>,
    pub c_hi: Option<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Number of `c` samples in `staircase.csv`.
    #[serde(default = "default_points")]
    pub staircase_points: usize,
}

fn default_nu() -> f64 {
    0.5
}
fn default_thetas() -> Vec<f64> {
    vec![1.0, 0.5, 0.25]
}
fn default_cap() -> i64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    /// Truncation levels; defaults to the dyadic ladder up to `q_max`.
    pub q_values: Option<Vec<i64>>,
    #[serde(default = "default_cap")]
    pub real_cap: i64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection { nu: default_nu(), thetas: default_thetas(), q_values: None, real_cap: default_cap() }
    }
}

fn default_t_grid() -> Vec<usize> {
    vec![2, 4, 8, 16, 32]
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessTarget {
    pub p: i64,
    pub q: i64,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<usize>,
    #[serde(default = "default_true")]
    pub loops: bool,
}

fn default_window() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeTarget {
    #[serde(default = "golden_cf")]
    pub cf: Vec<u64>,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_cap")]
    pub cap: i64,
    /// Rotation-number window for the unlocked-measure probe.
    pub rho_lo: f64,
    pub rho_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub harmonic: Vec<HarmonicSection>,
    #[serde(default)]
    pub interaction: Vec<HarmonicSection>,
    pub scan: ScanSection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub flatness: Vec<FlatnessTarget>,
    #[serde(default)]
    pub probe: Vec<ProbeTarget>,
}

impl ScanConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ScanConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, digest(&text)))
    }

    pub fn build_model(&self) -> Result<GeneratingModel, CliError> {
        build_model(&self.model, &self.harmonic, &self.interaction)
    }

    pub fn estimator_levels(&self) -> Vec<i64> {
        self.estimators.q_values.clone().unwrap_or_else(|| dyadic_ladder(self.scan.q_max))
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let s = &self.scan;
        if s.q_max < 1 {
            return bad(format!("scan.q_max must be >= 1, got {}", s.q_max));
        }
        if !(s.h_lo < s.h_hi) {
            return bad(format!("scan.h_lo must be below scan.h_hi ({} >= {})", s.h_lo, s.h_hi));
        }
        match (s.c_lo, s.c_hi) {
            (Some(a), Some(b)) if !(a < b) => return bad(format!("scan.c_lo must be below scan.c_hi ({a} >= {b})")),
            (Some(_), None) | (None, Some(_)) => return bad("scan.c_lo and scan.c_hi go together".into()),
            _ => {}
        }
        if s.workers == 0 {
            return bad("scan.workers must be >= 1".into());
        }
        if s.staircase_points < 2 {
            return bad("scan.staircase_points must be >= 2".into());
        }
        let e = &self.estimators;
        if !(e.nu > 0.0 && e.nu < 1.0) {
            return bad(format!("estimators.nu must lie in (0, 1), got {}", e.nu));
        }
        if let Some(t) = e.thetas.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return bad(format!("estimators.thetas entries must lie in (0, 1], got {t}"));
        }
        if e.q_values.as_ref().is_some_and(|v| v.iter().any(|&q| q < 1)) {
            return bad("estimators.q_values must be >= 1".into());
        }
        for f in &self.flatness {
            if f.q < 1 || f.t_grid.is_empty() || f.t_grid.contains(&0) {
                return bad(format!("flatness target {}/{} needs q >= 1 and a positive T grid", f.p, f.q));
            }
        }
        for p in &self.probe {
            if p.cf.is_empty() || !(p.window > 0.0) || !(p.rho_lo < p.rho_hi) {
                return bad("probe needs a continued fraction, window > 0 and rho_lo < rho_hi".into());
            }
        }
        self.build_model().map(|_| ())
    }
}

/// Hex SHA-256 of the configuration text.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn load_model_file(path: &Path) -> Result<GeneratingModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: ModelFile = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    file.build()
}
