//! Geometry of `X = SPD(n, det 1)` with the invariant metric `d(x,y) = ‖log spec(x⁻¹y)‖`.

mod config;
mod point;
mod theta;
mod vectors;

pub use config::{block_sizes, block_step_type, validate_pattern, ModelConfig, ModelConfigFile, Tolerances};
pub use point::{tangent_angle, transporter, Isometry, MatrixJson, SpdPoint, TangentSym};
pub use theta::ThetaSpec;
pub use vectors::{type_of, weyl_max_pairing, CartanVector, TypeVector};

use serde::{Deserialize, Serialize};

use crate::error::{MorseError, Result};
use crate::linalg::{self, Mat};

/// Singular value decomposition of a transporter `W = U diag(σ) Vᵀ`, assembled so that
/// the large singular values come from `W` and the small ones from `W⁻¹`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// `log σ_i`, nonincreasing, summing to zero.
    pub log_sv: Vec<f64>,
    pub u: Mat,
    pub v: Mat,
}

impl Decomposition {
    /// Cartan vector of the pair `(I, W Wᵀ)`: `2 log σ`.
    pub fn cartan(&self) -> CartanVector {
        CartanVector::from_spectrum(self.log_sv.iter().map(|l| 2.0 * l).collect())
    }
}

pub fn decompose(w: &Isometry) -> Decomposition {
    let n = w.dim();
    let (u1, s1, v1) = linalg::svd_desc(w.matrix());
    let (u2, s2, v2) = linalg::svd_desc(w.inverse_matrix());
    // W⁻¹ = V diag(1/σ) Uᵀ: its right vectors are W's left vectors in reverse order.
    let h = n / 2;
    let mut log_sv = vec![0.0; n];
    let mut cand: Vec<Option<nalgebra::DVector<f64>>> = vec![None; n];
    let mut order = Vec::with_capacity(n);
    for i in 0..h {
        let j = n - 1 - i;
        log_sv[i] = s1[i].ln();
        log_sv[j] = -s2[i].ln();
        cand[i] = Some(u1.column(i).into_owned());
        cand[j] = Some(v2.column(i).into_owned());
        order.push(i);
        order.push(j);
    }
    if n % 2 == 1 {
        log_sv[h] = -log_sv.iter().sum::<f64>();
        order.push(h);
    }
    let u = orthonormal_from_candidates(&cand, &order);
    let fallback = || {
        let mut cols: Vec<Option<nalgebra::DVector<f64>>> = vec![None; n];
        for i in 0..h {
            cols[i] = Some(v1.column(i).into_owned());
            cols[n - 1 - i] = Some(u2.column(i).into_owned());
        }
        orthonormal_from_candidates(&cols, &order)
    };
    let v = paired_right_vectors(w, &u, &log_sv).unwrap_or_else(fallback);
    let mean = log_sv.iter().sum::<f64>() / n as f64;
    for l in &mut log_sv {
        *l -= mean;
    }
    Decomposition { log_sv, u, v }
}

/// Orthonormal columns built in `order`, most reliable first. A candidate that is missing
/// or collapses when projected off the accepted ones (equal singular values split across
/// the two SVDs) is replaced by a vector of the remaining complement.
fn orthonormal_from_candidates(cand: &[Option<nalgebra::DVector<f64>>], order: &[usize]) -> Mat {
    let n = cand.len();
    let mut out: Vec<Option<nalgebra::DVector<f64>>> = vec![None; n];
    let mut accepted: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for &i in order {
        let Some(c) = &cand[i] else {
            missing.push(i);
            continue;
        };
        let mut x = c.clone();
        for _ in 0..2 {
            for q in &accepted {
                let p = q.dot(&x);
                x -= q * p;
            }
        }
        let nrm = x.norm();
        if nrm > 0.5 {
            x /= nrm;
            accepted.push(x.clone());
            out[i] = Some(x);
        } else {
            missing.push(i);
        }
    }
    for i in missing {
        let basis = if accepted.is_empty() {
            Mat::identity(n, n)
        } else {
            linalg::orth_complement(&Mat::from_columns(&accepted))
        };
        let x = basis.column(0).into_owned();
        accepted.push(x.clone());
        out[i] = Some(x);
    }
    Mat::from_columns(&out.into_iter().map(|c| c.expect("filled")).collect::<Vec<_>>())
}

/// Right vectors matched to `u` so that `W v_i = σ_i u_i` even within clusters of equal
/// singular values: `Wᵀu_i/σ_i` where `σ_i ≥ 1`, `σ_i W⁻¹u_i` below.
fn paired_right_vectors(w: &Isometry, u: &Mat, log_sv: &[f64]) -> Option<Mat> {
    let cols: Vec<Option<nalgebra::DVector<f64>>> = log_sv
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let ui = u.column(i);
            Some(if l >= 0.0 {
                w.matrix().tr_mul(&ui) / l.exp()
            } else {
                w.inverse_matrix() * ui * l.exp()
            })
        })
        .collect();
    let order: Vec<usize> = (0..cols.len()).collect();
    let v = orthonormal_from_candidates(&cols, &order);
    let raw = Mat::from_columns(&cols.iter().map(|c| c.clone().unwrap()).collect::<Vec<_>>());
    // Reject if re-orthonormalization had to move a column noticeably.
    ((&v - raw).amax() <= 1e-6).then_some(v)
}

fn check_dims(x: &SpdPoint, y: &SpdPoint) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(MorseError::Dimension {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(())
}

/// Δ-valued distance `d_Δ(x, y)`.
pub fn cartan_vector(x: &SpdPoint, y: &SpdPoint) -> Result<CartanVector> {
    check_dims(x, y)?;
    Ok(decompose(&transporter(x, y)).cartan())
}

pub fn riem_distance(x: &SpdPoint, y: &SpdPoint) -> Result<f64> {
    Ok(cartan_vector(x, y)?.norm())
}

/// Point at parameter `t` on the geodesic from `x` (t = 0) to `y` (t = 1):
/// `x^{1/2} (x^{-1/2} y x^{-1/2})^t x^{1/2}`. Values of `t` outside `[0, 1]` extend the geodesic.
pub fn geodesic_point(x: &SpdPoint, y: &SpdPoint, t: f64) -> Result<SpdPoint> {
    check_dims(x, y)?;
    if !t.is_finite() {
        return Err(MorseError::Invalid(format!("geodesic parameter {t}")));
    }
    let d = decompose(&transporter(x, y));
    Ok(geodesic_point_from(x, &d, t))
}

/// Geodesic point from a precomputed decomposition of the transporter `x → y`.
pub fn geodesic_point_from(x: &SpdPoint, d: &Decomposition, t: f64) -> SpdPoint {
    let n = d.log_sv.len();
    let s = nalgebra::DVector::from_iterator(n, d.log_sv.iter().map(|l| (t * l).exp()));
    let si = s.map(|v| 1.0 / v);
    let step = Isometry::from_parts(&d.u * Mat::from_diagonal(&s), Mat::from_diagonal(&si) * d.u.transpose());
    x.frame_compose(&step)
}

impl SpdPoint {
    /// The point whose frame is `frame(self) · step`.
    pub fn frame_compose(&self, step: &Isometry) -> SpdPoint {
        SpdPoint::from_frame(self.frame().compose(step))
    }
}

/// Midpoint of the geodesic segment `xy`.
pub fn midpoint(x: &SpdPoint, y: &SpdPoint) -> Result<SpdPoint> {
    geodesic_point(x, y, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub regular: bool,
    pub margin: f64,
}

/// Θ-regularity of the segment `xy`, with margin `min_α (α(type) − bound_α)`.
pub fn theta_regular(x: &SpdPoint, y: &SpdPoint, theta: &ThetaSpec, eigengap: f64) -> Result<Regularity> {
    check_dims(x, y)?;
    regularity_of(&cartan_vector(x, y)?, theta, eigengap)
}

pub fn regularity_of(v: &CartanVector, theta: &ThetaSpec, eigengap: f64) -> Result<Regularity> {
    if v.dim() != theta.n {
        return Err(MorseError::Dimension {
            expected: theta.n,
            got: v.dim(),
        });
    }
    if v.norm() <= eigengap {
        return Err(MorseError::Coincident);
    }
    let t = type_of(v, eigengap)?;
    let margin = theta.margin(&t);
    Ok(Regularity {
        regular: margin >= 0.0,
        margin,
    })
}

/// Polyhedral Finsler distance `d^θ̄(x, y)`: the maximal pairing of the Weyl orbit of θ̄
/// with `d_Δ(x, y)`, i.e. the dot product of the two sorted vectors.
pub fn finsler_distance(x: &SpdPoint, y: &SpdPoint, finsler_type: &TypeVector) -> Result<f64> {
    check_dims(x, y)?;
    if finsler_type.dim() != x.dim() {
        return Err(MorseError::InvalidType(format!(
            "Finsler type has length {} but n = {}",
            finsler_type.dim(),
            x.dim()
        )));
    }
    Ok(weyl_max_pairing(finsler_type, &cartan_vector(x, y)?))
}

pub fn opposition(v: &CartanVector) -> CartanVector {
    v.opposition()
}

/// `g · x = g x gᵀ` (with `|det g| = 1` already enforced by [`Isometry`]).
pub fn apply_isometry(g: &Isometry, x: &SpdPoint) -> Result<SpdPoint> {
    if g.dim() != x.dim() {
        return Err(MorseError::Dimension {
            expected: x.dim(),
            got: g.dim(),
        });
    }
    Ok(x.transform(g))
}
