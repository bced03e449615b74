use serde::{Deserialize, Serialize};

use crate::error::{MorseError, Result};

/// Δ-valued distance: sorted log-spectrum of a relative position.
/// Nonincreasing, coordinates sum to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CartanVector(Vec<f64>);

/// Unit vector of the model chamber: nonincreasing, sum zero, norm one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeVector(Vec<f64>);

fn is_nonincreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[0] + tol >= w[1])
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn negate_reverse(v: &[f64]) -> Vec<f64> {
    v.iter().rev().map(|x| -x).collect()
}

impl CartanVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let scale = norm(&coords).max(1.0);
        if !is_nonincreasing(&coords, 1e-12 * scale) {
            return Err(MorseError::Invalid(format!("Cartan vector must be nonincreasing: {coords:?}")));
        }
        let s: f64 = coords.iter().sum();
        if s.abs() > 1e-9 * scale {
            return Err(MorseError::Invalid(format!("Cartan vector must sum to zero (sum {s:e})")));
        }
        Ok(CartanVector(coords))
    }

    /// Sorts the coordinates and removes the mean. Used internally where the
    /// coordinates come out of a spectral computation.
    pub(crate) fn from_spectrum(mut coords: Vec<f64>) -> Self {
        coords.sort_by(|a, b| b.total_cmp(a));
        let mean = coords.iter().sum::<f64>() / coords.len() as f64;
        for c in &mut coords {
            *c -= mean;
        }
        CartanVector(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// The opposition involution ι: negate and reverse.
    pub fn opposition(&self) -> CartanVector {
        CartanVector(negate_reverse(&self.0))
    }

    /// Log-gap `v_{d−1} − v_d` at a pattern index `d` (1-based split position).
    pub fn gap(&self, d: usize) -> f64 {
        self.0[d - 1] - self.0[d]
    }
}

impl TypeVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(MorseError::InvalidType("need at least two coordinates".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(MorseError::InvalidType("non-finite coordinate".into()));
        }
        if !is_nonincreasing(&coords, 1e-12) {
            return Err(MorseError::InvalidType(format!("must be nonincreasing: {coords:?}")));
        }
        let s: f64 = coords.iter().sum();
        if s.abs() > 1e-9 {
            return Err(MorseError::InvalidType(format!("must sum to zero (sum {s:e})")));
        }
        let nrm = norm(&coords);
        if (nrm - 1.0).abs() > 1e-9 {
            return Err(MorseError::InvalidType(format!("must have unit norm (norm {nrm})")));
        }
        Ok(TypeVector(coords))
    }

    /// Normalizes a nonzero, nonincreasing, trace-zero vector.
    pub fn from_unnormalized(coords: &[f64]) -> Result<Self> {
        let nrm = norm(coords);
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(MorseError::InvalidType("zero vector has no type".into()));
        }
        TypeVector::new(coords.iter().map(|c| c / nrm).collect())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn opposition(&self) -> TypeVector {
        TypeVector(negate_reverse(&self.0))
    }

    pub fn is_iota_invariant(&self, tol: f64) -> bool {
        self.0
            .iter()
            .zip(negate_reverse(&self.0))
            .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Constant on the blocks cut out by `pattern` and strictly decreasing across them.
    pub fn is_face_interior(&self, pattern: &[usize], tol: f64) -> bool {
        let n = self.0.len();
        let mut cuts = vec![false; n];
        for &d in pattern {
            if d == 0 || d >= n {
                return false;
            }
            cuts[d] = true;
        }
        (1..n).all(|i| {
            let gap = self.0[i - 1] - self.0[i];
            if cuts[i] {
                gap > tol
            } else {
                gap.abs() <= tol
            }
        })
    }

    /// Value of the simple root at split position `d`.
    pub fn root(&self, d: usize) -> f64 {
        self.0[d - 1] - self.0[d]
    }
}

/// type map θ: normalization of a nonzero Cartan vector.
pub fn type_of(v: &CartanVector, eigengap: f64) -> Result<TypeVector> {
    let nrm = v.norm();
    if nrm <= eigengap {
        return Err(MorseError::InvalidType(format!("Cartan vector of norm {nrm:e} has no type")));
    }
    Ok(TypeVector(v.0.iter().map(|c| c / nrm).collect()))
}

/// Maximal pairing of `theta` with `v` over the Weyl (permutation) orbit of `theta`,
/// computed as the dot product of the two sorted vectors.
pub fn weyl_max_pairing(theta: &TypeVector, v: &CartanVector) -> f64 {
    theta.0.iter().zip(&v.0).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opposition_examples() {
        let v = CartanVector::new(vec![2.0, 0.0, -2.0]).unwrap();
        assert_eq!(v.opposition(), v);
        let w = CartanVector::new(vec![3.0, 1.0, -4.0]).unwrap();
        assert_eq!(w.opposition().coords(), &[4.0, -1.0, -3.0]);
        assert_eq!(w.opposition().opposition(), w);
    }

    #[test]
    fn type_of_normalizes() {
        let v = CartanVector::new(vec![2.0, 0.0, -2.0]).unwrap();
        let t = type_of(&v, 1e-7).unwrap();
        let s = 2.0 * 2f64.sqrt();
        assert!((t.coords()[0] - 2.0 / s).abs() < 1e-15);
        let z = CartanVector::new(vec![0.0, 0.0]).unwrap();
        assert!(type_of(&z, 1e-7).is_err());
    }

    #[test]
    fn rejects_unsorted() {
        assert!(CartanVector::new(vec![-1.0, 1.0]).is_err());
        assert!(TypeVector::new(vec![0.0, 1.0, -1.0]).is_err());
    }
}
