use serde::{Deserialize, Serialize};

use super::config::validate_pattern;
use super::TypeVector;
use crate::error::{MorseError, Result};

/// An ι-invariant Weyl-convex compact subset Θ of the open star of the face,
/// given by lower bounds on the simple roots that vanish on the face:
/// `Θ = { v : α_d(v) ≥ bound_d for every d in the pattern }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSpec {
    pub n: usize,
    pub pattern: Vec<usize>,
    /// `bounds[j]` bounds the root at split position `pattern[j]`.
    pub bounds: Vec<f64>,
}

impl ThetaSpec {
    pub fn new(n: usize, pattern: Vec<usize>, bounds: Vec<f64>) -> Result<Self> {
        validate_pattern(n, &pattern)?;
        if bounds.len() != pattern.len() {
            return Err(MorseError::Config(format!(
                "Θ needs one bound per pattern index ({} != {})",
                bounds.len(),
                pattern.len()
            )));
        }
        if bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(MorseError::Config(format!("Θ bounds must be positive: {bounds:?}")));
        }
        for (j, &d) in pattern.iter().enumerate() {
            let k = pattern.iter().position(|&e| e == n - d).expect("validated pattern");
            if (bounds[j] - bounds[k]).abs() > 1e-15 * bounds[j].max(1.0) {
                return Err(MorseError::Config(format!("Θ bounds are not ι-symmetric: {bounds:?}")));
            }
        }
        Ok(ThetaSpec { n, pattern, bounds })
    }

    pub fn uniform(n: usize, pattern: &[usize], bound: f64) -> Result<Self> {
        ThetaSpec::new(n, pattern.to_vec(), vec![bound; pattern.len()])
    }

    /// `min_α (α(t) − bound_α)`; nonnegative iff `t ∈ Θ`.
    pub fn margin(&self, t: &TypeVector) -> f64 {
        self.pattern
            .iter()
            .zip(&self.bounds)
            .map(|(&d, &b)| t.root(d) - b)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, t: &TypeVector) -> bool {
        self.margin(t) >= 0.0
    }

    /// `Θ_i`: every root of the face bounded below by `1/i`.
    pub fn stage(n: usize, pattern: &[usize], i: usize) -> Result<Self> {
        if i == 0 {
            return Err(MorseError::Config("stage index starts at 1".into()));
        }
        ThetaSpec::uniform(n, pattern, 1.0 / i as f64)
    }

    /// `self ⊆ other` (every bound of `other` is at most ours).
    pub fn is_subset_of(&self, other: &ThetaSpec) -> bool {
        self.same_face(other) && self.bounds.iter().zip(&other.bounds).all(|(a, b)| b <= a)
    }

    /// `self ⊂ int(other)` relative to the chamber: strictly smaller bounds everywhere.
    pub fn is_strictly_inside(&self, other: &ThetaSpec) -> bool {
        self.same_face(other) && self.bounds.iter().zip(&other.bounds).all(|(a, b)| b < a)
    }

    pub fn same_face(&self, other: &ThetaSpec) -> bool {
        self.n == other.n && self.pattern == other.pattern
    }

    /// Key used to match calibration entries.
    pub fn key(&self) -> String {
        let b: Vec<String> = self.bounds.iter().map(|b| format!("{b:.12e}")).collect();
        format!("{}|{:?}|{}", self.n, self.pattern, b.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_of_sl3_example() {
        let th = ThetaSpec::uniform(3, &[1, 2], 0.1).unwrap();
        let t = TypeVector::from_unnormalized(&[2.0, 0.0, -2.0]).unwrap();
        let expect = 2.0 / (2.0 * 2f64.sqrt()) - 0.1;
        assert!((th.margin(&t) - expect).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_bounds_rejected() {
        assert!(ThetaSpec::new(3, vec![1, 2], vec![0.1, 0.2]).is_err());
        assert!(ThetaSpec::new(3, vec![1, 2], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn inclusion() {
        let a = ThetaSpec::uniform(3, &[1, 2], 0.2).unwrap();
        let b = ThetaSpec::uniform(3, &[1, 2], 0.1).unwrap();
        assert!(a.is_subset_of(&b) && a.is_strictly_inside(&b));
        assert!(!b.is_subset_of(&a));
    }
}
