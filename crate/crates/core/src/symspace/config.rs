use serde::{Deserialize, Serialize};

use super::{TypeVector, ThetaSpec};
use crate::error::{MorseError, Result};

/// Numerical tolerance bundle shared by every check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Log-eigenvalue gaps below this are treated as degenerate.
    pub eigengap: f64,
    /// Gradient-norm target for nearest-point projections.
    pub projection: f64,
    /// Generic angle tolerance.
    pub angle: f64,
    /// Largest principal angle under which two subspaces are considered equal.
    pub flag: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eigengap: 1e-7,
            projection: 1e-10,
            angle: 1e-9,
            flag: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eigengap", self.eigengap),
            ("projection", self.projection),
            ("angle", self.angle),
            ("flag", self.flag),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MorseError::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// The model `X = SL(n,ℝ)/SO(n)` together with a fixed ι-invariant face type
/// (given by a dimension pattern), the angle type ζ and the Finsler type θ̄.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n: usize,
    pub pattern: Vec<usize>,
    pub zeta: TypeVector,
    pub finsler_type: TypeVector,
    pub tol: Tolerances,
}

/// On-disk form of [`ModelConfig`]; `zeta` and `finsler_type` default to the block-step vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfigFile {
    pub n: usize,
    pub pattern: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finsler_type: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

/// Checks `0 < d_1 < … < d_k < n` and `{d_j} = {n − d_j}`.
pub fn validate_pattern(n: usize, pattern: &[usize]) -> Result<()> {
    if n < 2 {
        return Err(MorseError::Config(format!("n must be at least 2, got {n}")));
    }
    if pattern.is_empty() {
        return Err(MorseError::Config("pattern must be nonempty".into()));
    }
    for w in pattern.windows(2) {
        if w[0] >= w[1] {
            return Err(MorseError::Config(format!("pattern must be strictly increasing: {pattern:?}")));
        }
    }
    if pattern[0] == 0 || *pattern.last().unwrap() >= n {
        return Err(MorseError::Config(format!("pattern entries must lie in 1..{n}: {pattern:?}")));
    }
    for &d in pattern {
        if !pattern.contains(&(n - d)) {
            return Err(MorseError::Config(format!(
                "pattern {pattern:?} is not ι-symmetric: {d} present but {} missing",
                n - d
            )));
        }
    }
    Ok(())
}

/// Block sizes `b_0, …, b_k` cut out by the pattern.
pub fn block_sizes(n: usize, pattern: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(pattern.len() + 1);
    let mut prev = 0;
    for &d in pattern.iter().chain(std::iter::once(&n)) {
        out.push(d - prev);
        prev = d;
    }
    out
}

/// Block-step type vector: block `j` of `k + 1` blocks gets the constant `k/2 − j`,
/// then the vector is normalized. ι-invariant whenever the pattern is.
pub fn block_step_type(n: usize, pattern: &[usize]) -> Result<TypeVector> {
    validate_pattern(n, pattern)?;
    let blocks = block_sizes(n, pattern);
    let k = pattern.len() as f64;
    let mut coords = Vec::with_capacity(n);
    for (j, &b) in blocks.iter().enumerate() {
        let c = k / 2.0 - j as f64;
        coords.extend(std::iter::repeat_n(c, b));
    }
    TypeVector::from_unnormalized(&coords)
}

impl ModelConfig {
    /// Model with block-step ζ and θ̄ and default tolerances.
    pub fn new(n: usize, pattern: Vec<usize>) -> Result<Self> {
        let t = block_step_type(n, &pattern)?;
        let cfg = ModelConfig {
            n,
            pattern,
            zeta: t.clone(),
            finsler_type: t,
            tol: Tolerances::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full-flag model `pattern = (1, …, n−1)`.
    pub fn full_flag(n: usize) -> Result<Self> {
        Self::new(n, (1..n).collect())
    }

    pub fn validate(&self) -> Result<()> {
        validate_pattern(self.n, &self.pattern)?;
        self.tol.validate()?;
        for (name, t) in [("zeta", &self.zeta), ("finsler_type", &self.finsler_type)] {
            if t.dim() != self.n {
                return Err(MorseError::Config(format!("{name} has length {} but n = {}", t.dim(), self.n)));
            }
            if !t.is_iota_invariant(1e-9) {
                return Err(MorseError::Config(format!("{name} is not ι-invariant")));
            }
            if !t.is_face_interior(&self.pattern, 1e-12) {
                return Err(MorseError::Config(format!(
                    "{name} must be constant on pattern blocks and strictly decreasing across them"
                )));
            }
        }
        Ok(())
    }

    pub fn from_file(f: &ModelConfigFile) -> Result<Self> {
        let mut cfg = ModelConfig::new(f.n, f.pattern.clone())?;
        if let Some(z) = &f.zeta {
            cfg.zeta = TypeVector::from_unnormalized(z)?;
        }
        if let Some(t) = &f.finsler_type {
            cfg.finsler_type = TypeVector::from_unnormalized(t)?;
        }
        if let Some(tol) = f.tolerances {
            cfg.tol = tol;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_file(&self) -> ModelConfigFile {
        ModelConfigFile {
            n: self.n,
            pattern: self.pattern.clone(),
            zeta: Some(self.zeta.coords().to_vec()),
            finsler_type: Some(self.finsler_type.coords().to_vec()),
            tolerances: Some(self.tol),
        }
    }

    /// Θ with the same lower bound on every root of the face.
    pub fn uniform_theta(&self, bound: f64) -> Result<ThetaSpec> {
        ThetaSpec::uniform(self.n, &self.pattern, bound)
    }
}
