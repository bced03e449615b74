//! Empirical constants standing in for the existence-only constants of the theory.
//!
//! A calibration file is versioned TOML. Its id is the SHA-256 of its canonical
//! serialization, so reformatting a file does not change the id but any edit to a
//! value does. Entries are matched by dominance: an entry calibrated for a smaller
//! regularity set `Θ`, a larger relaxed set `Θ′` and a stronger datum also serves
//! every weaker query.

mod harness;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MorseError, Result};
use crate::symspace::ThetaSpec;

pub use harness::{calibrate, ModelSweep, SweepConfig};

pub const FORMAT_VERSION: u32 = 1;

/// The calibration produced by the default sweep for `SL(3)` and `SL(2)`.
pub const DEFAULT_CALIBRATION: &str = include_str!("../../data/default_calibration.toml");

/// `(ε, l)` for which straight spaced sequences satisfied the Morse lemma conclusion at `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraightnessEntry {
    pub theta: ThetaSpec,
    pub theta_prime: ThetaSpec,
    pub delta: f64,
    pub epsilon: f64,
    pub spacing: f64,
}

/// Separation threshold and distance budget for diamond proximity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseEntry {
    pub theta: ThetaSpec,
    pub theta_prime: ThetaSpec,
    pub max_d: f64,
    pub max_l: f64,
    pub max_a: f64,
    /// Pairs closer than `threshold_base + threshold_slope · D` are exempt.
    pub threshold_base: f64,
    pub threshold_slope: f64,
    /// Intermediate samples must lie within `anchor_factor · D + slack` of the diamond.
    pub anchor_factor: f64,
    pub slack: f64,
}

impl MorseEntry {
    pub fn threshold(&self, d: f64) -> f64 {
        self.threshold_base + self.threshold_slope * d
    }

    pub fn budget(&self, d: f64) -> f64 {
        self.anchor_factor * d + self.slack
    }
}

/// Constants promoting a local Morse datum to a global one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalToGlobalEntry {
    pub theta: ThetaSpec,
    pub theta_prime: ThetaSpec,
    pub max_d: f64,
    pub max_l: f64,
    pub max_a: f64,
    /// Window length of the local check.
    pub scale: usize,
    pub d_prime: f64,
    /// `L′ = l_factor · L`.
    pub l_factor: f64,
    pub a_prime: f64,
    /// Relaxed set used when the promoted datum is checked directly.
    pub theta_check: ThetaSpec,
}

/// Thresholds of one recognizer stage; `Θ_i` itself follows from the stage index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub n: usize,
    pub pattern: Vec<usize>,
    pub stage: usize,
    pub epsilon: f64,
    pub spacing: f64,
    pub scale: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CalibrationFile {
    pub version: u32,
    /// Free-form description of the sweep that produced the file.
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub straightness: Vec<StraightnessEntry>,
    #[serde(default)]
    pub morse: Vec<MorseEntry>,
    #[serde(default)]
    pub local_to_global: Vec<LocalToGlobalEntry>,
    #[serde(default)]
    pub stages: Vec<StageEntry>,
}

/// A parsed calibration file together with its content id.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub file: CalibrationFile,
    pub id: String,
}

/// Datum coordinates used for dominance lookups.
#[derive(Debug, Clone, Copy)]
pub struct DatumKey {
    pub d: f64,
    pub l: f64,
    pub a: f64,
}

fn covers(entry_theta: &ThetaSpec, entry_prime: &ThetaSpec, theta: &ThetaSpec, theta_prime: &ThetaSpec) -> bool {
    theta.is_subset_of(entry_theta) && entry_prime.is_subset_of(theta_prime)
}

fn theta_text(t: &ThetaSpec) -> String {
    format!("n={} pattern={:?} bounds={:?}", t.n, t.pattern, t.bounds)
}

impl CalibrationFile {
    /// Canonical TOML text; the id is computed from it.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| MorseError::Parse(e.to_string()))
    }

    pub fn id(&self) -> Result<String> {
        let text = self.to_toml()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

impl Calibration {
    pub fn new(file: CalibrationFile) -> Result<Self> {
        if file.version != FORMAT_VERSION {
            return Err(MorseError::Parse(format!(
                "calibration format version {} is not supported (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        let id = file.id()?;
        Ok(Calibration { file, id })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: CalibrationFile = toml::from_str(text).map_err(|e| MorseError::Parse(e.to_string()))?;
        Calibration::new(file)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Calibration::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The calibration shipped with the library.
    pub fn default_table() -> Self {
        Calibration::from_toml(DEFAULT_CALIBRATION).expect("shipped calibration parses")
    }

    /// Straightness thresholds valid for `(Θ, Θ′, δ)`: the entry must use a larger `Θ`,
    /// a smaller `Θ′` and a smaller `δ`. Among matches the loosest `ε` wins.
    pub fn straightness(&self, theta: &ThetaSpec, theta_prime: &ThetaSpec, delta: f64) -> Result<&StraightnessEntry> {
        self.file
            .straightness
            .iter()
            .filter(|e| covers(&e.theta, &e.theta_prime, theta, theta_prime) && e.delta <= delta)
            .max_by(|a, b| a.epsilon.total_cmp(&b.epsilon).then(b.spacing.total_cmp(&a.spacing)))
            .ok_or_else(|| {
                MorseError::CalibrationMissing(format!(
                    "straightness for Θ [{}], Θ′ [{}], δ = {delta}",
                    theta_text(theta),
                    theta_text(theta_prime)
                ))
            })
    }

    pub fn morse(&self, theta: &ThetaSpec, theta_prime: &ThetaSpec, key: DatumKey) -> Result<&MorseEntry> {
        self.file
            .morse
            .iter()
            .find(|e| {
                covers(&e.theta, &e.theta_prime, theta, theta_prime) && key.d <= e.max_d && key.l <= e.max_l && key.a <= e.max_a
            })
            .ok_or_else(|| {
                MorseError::CalibrationMissing(format!(
                    "Morse threshold for Θ [{}], Θ′ [{}], (D, L, A) = ({}, {}, {})",
                    theta_text(theta),
                    theta_text(theta_prime),
                    key.d,
                    key.l,
                    key.a
                ))
            })
    }

    pub fn local_to_global(&self, theta: &ThetaSpec, theta_prime: &ThetaSpec, key: DatumKey) -> Result<&LocalToGlobalEntry> {
        self.file
            .local_to_global
            .iter()
            .find(|e| {
                covers(&e.theta, &e.theta_prime, theta, theta_prime) && key.d <= e.max_d && key.l <= e.max_l && key.a <= e.max_a
            })
            .ok_or_else(|| {
                MorseError::CalibrationMissing(format!(
                    "local-to-global constants for Θ [{}], Θ′ [{}], (D, L, A) = ({}, {}, {})",
                    theta_text(theta),
                    theta_text(theta_prime),
                    key.d,
                    key.l,
                    key.a
                ))
            })
    }

    pub fn stage(&self, n: usize, pattern: &[usize], stage: usize) -> Result<&StageEntry> {
        self.file
            .stages
            .iter()
            .find(|e| e.n == n && e.pattern == pattern && e.stage == stage)
            .ok_or_else(|| MorseError::CalibrationMissing(format!("stage {stage} for n = {n}, pattern {pattern:?}")))
    }
}
