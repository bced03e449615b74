//! Run configuration: one TOML file with a section per command.

use std::path::{Path, PathBuf};

use morse_core::calibration::{Calibration, SweepConfig};
use morse_core::error::{MorseError, Result};
use morse_core::recognizer::RecognizerConfig;
use morse_core::schottky::SchottkyConfig;
use morse_core::symspace::{ModelConfig, ModelConfigFile, ThetaSpec};
use serde::{Deserialize, Serialize};

/// Datum and relaxed set for `certify-path` and `certify-local`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    /// `Θ = Θ_stage` and `Θ′ = Θ_{stage+1}` unless bounds are given.
    pub stage: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_prime: Option<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: f64,
    /// Fitted from the path when absent.
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(rename = "A")]
    pub a: f64,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection {
            stage: 2,
            theta: None,
            theta_prime: None,
            d: 1.0,
            l: None,
            a: 1.0,
        }
    }
}

impl CertifySection {
    pub fn thetas(&self, model: &ModelConfig) -> Result<(ThetaSpec, ThetaSpec)> {
        let make = |bounds: &Option<Vec<f64>>, stage: usize| match bounds {
            Some(b) => ThetaSpec::new(model.n, model.pattern.clone(), b.clone()),
            None => ThetaSpec::stage(model.n, &model.pattern, stage),
        };
        Ok((make(&self.theta, self.stage)?, make(&self.theta_prime, self.stage + 1)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognizeSection {
    /// Stages `1..=stage_max` are read from the calibration.
    pub stage_max: usize,
    /// Stages actually run.
    pub budget: usize,
    #[serde(flatten)]
    pub settings: RecognizerConfig,
}

impl Default for RecognizeSection {
    fn default() -> Self {
        RecognizeSection {
            stage_max: 10,
            budget: 10,
            settings: RecognizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Not recorded, so reruns into different directories produce identical records.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    /// Shipped table when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    pub model: ModelConfigFile,
    pub certify: CertifySection,
    pub schottky: SchottkyConfig,
    pub recognize: RecognizeSection,
    /// The standard sweep when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<SweepConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("."),
            calibration: None,
            model: ModelConfigFile {
                n: 3,
                pattern: vec![1, 2],
                zeta: None,
                finsler_type: None,
                tolerances: None,
            },
            certify: CertifySection::default(),
            schottky: SchottkyConfig::default(),
            recognize: RecognizeSection::default(),
            calibrate: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| MorseError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn model(&self) -> Result<ModelConfig> {
        ModelConfig::from_file(&self.model)
    }

    pub fn calibration(&self) -> Result<Calibration> {
        match &self.calibration {
            Some(p) => Calibration::load(p),
            None => Ok(Calibration::default_table()),
        }
    }
}
