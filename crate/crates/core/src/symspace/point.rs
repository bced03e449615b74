//! Points and isometries.
//!
//! A point `x` of `SPD(n, det 1)` is stored through a *frame*: an element `g` of
//! `SL±(n,ℝ)` with `x = g gᵀ`, together with `g⁻¹`. Relative positions of two points
//! are then transporters `W = g_x⁻¹ g_y` (and `W⁻¹ = g_y⁻¹ g_x`), which keeps points
//! far from the identity usable in double precision: the top half of the spectrum is
//! read off `W`, the bottom half off `W⁻¹`.

use serde::{Deserialize, Serialize};

use crate::error::{MorseError, Result};
use crate::linalg::{self, Mat};

/// An element `g` of `GL(n,ℝ)` with `|det g| = 1`, acting by `x ↦ g x gᵀ`.
#[derive(Debug, Clone)]
pub struct Isometry {
    g: Mat,
    inv: Mat,
}

/// Row-major JSON form shared by points and isometries: `{"n": .., "entries": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl MatrixJson {
    pub fn from_mat(m: &Mat) -> Self {
        let n = m.nrows();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(m[(i, j)]);
            }
        }
        MatrixJson { n, entries }
    }

    pub fn to_mat(&self) -> Result<Mat> {
        if self.n == 0 || self.entries.len() != self.n * self.n {
            return Err(MorseError::Parse(format!(
                "matrix with n = {} needs {} entries, got {}",
                self.n,
                self.n * self.n,
                self.entries.len()
            )));
        }
        if self.entries.iter().any(|e| !e.is_finite()) {
            return Err(MorseError::Parse("non-finite matrix entry".into()));
        }
        Ok(Mat::from_row_slice(self.n, self.n, &self.entries))
    }
}

const DET_RENORMALIZE: f64 = 1e-6;

impl Isometry {
    /// Accepts `g` when `|det g|` is within relative `1e-6` of one (rescaling it exactly),
    /// rejects it otherwise.
    pub fn new(g: Mat) -> Result<Self> {
        if !g.is_square() {
            return Err(MorseError::SingularIsometry("matrix is not square".into()));
        }
        let det = linalg::determinant(&g);
        if !det.is_finite() || (det.abs() - 1.0).abs() > DET_RENORMALIZE {
            return Err(MorseError::SingularIsometry(format!("|det| = {} is not 1", det.abs())));
        }
        Self::normalized(g)
    }

    /// Rescales any invertible matrix to `|det| = 1`.
    pub fn normalized(g: Mat) -> Result<Self> {
        let n = g.nrows();
        if !g.is_square() || n == 0 {
            return Err(MorseError::SingularIsometry("matrix is not square".into()));
        }
        let det = linalg::determinant(&g);
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(MorseError::SingularIsometry(format!("determinant {det:e}")));
        }
        let g = g * det.abs().powf(-1.0 / n as f64);
        let inv = g
            .clone()
            .try_inverse()
            .ok_or_else(|| MorseError::SingularIsometry("inversion failed".into()))?;
        Ok(Isometry { g, inv })
    }

    /// Trusted constructor for a matrix and its known inverse.
    pub fn from_parts(g: Mat, inv: Mat) -> Self {
        debug_assert_eq!(g.nrows(), inv.nrows());
        Isometry { g, inv }
    }

    pub fn identity(n: usize) -> Self {
        Isometry {
            g: Mat::identity(n, n),
            inv: Mat::identity(n, n),
        }
    }

    /// Diagonal isometry from log-entries (need not sum to zero; renormalized).
    pub fn diagonal_exp(logs: &[f64]) -> Self {
        let n = logs.len();
        let mean = logs.iter().sum::<f64>() / n as f64;
        let d = nalgebra::DVector::from_iterator(n, logs.iter().map(|l| (l - mean).exp()));
        let di = d.map(|x| 1.0 / x);
        Isometry {
            g: Mat::from_diagonal(&d),
            inv: Mat::from_diagonal(&di),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.g
    }

    pub fn inverse_matrix(&self) -> &Mat {
        &self.inv
    }

    pub fn inverse(&self) -> Isometry {
        Isometry {
            g: self.inv.clone(),
            inv: self.g.clone(),
        }
    }

    /// `self ∘ other`, i.e. the matrix product `self · other`.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        Isometry {
            g: &self.g * &other.g,
            inv: &other.inv * &self.inv,
        }
    }

    /// `g^k` for any integer `k`, by repeated squaring.
    pub fn power(&self, k: i64) -> Isometry {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut e = k.unsigned_abs();
        let mut acc = Isometry::identity(self.dim());
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&sq);
            }
            e >>= 1;
            if e > 0 {
                sq = sq.compose(&sq);
            }
        }
        acc
    }

    /// Conjugate `h g h⁻¹`.
    pub fn conjugate_by(&self, h: &Isometry) -> Isometry {
        h.compose(self).compose(&h.inverse())
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_mat(&self.g)
    }

    pub fn from_json(j: &MatrixJson) -> Result<Self> {
        Isometry::new(j.to_mat()?)
    }
}

/// A point of the symmetric space `SPD(n, det 1)`.
#[derive(Debug, Clone)]
pub struct SpdPoint {
    frame: Isometry,
}

impl SpdPoint {
    /// Validates a symmetric positive-definite matrix. The determinant is rescaled to 1
    /// when within relative `1e-6`, rejected otherwise.
    pub fn from_matrix(m: &Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(MorseError::NotSpd("matrix is not square".into()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(MorseError::NotSpd("non-finite entry".into()));
        }
        if !linalg::is_symmetric(m, 1e-9) {
            return Err(MorseError::NotSpd("matrix is not symmetric".into()));
        }
        let (vals, vecs) = linalg::sym_eigen_desc(m);
        if vals.iter().any(|&l| l <= 0.0) {
            return Err(MorseError::NotSpd(format!("eigenvalue {:e} is not positive", vals.min())));
        }
        let logdet: f64 = vals.iter().map(|l| l.ln()).sum();
        let det = logdet.exp();
        if (det - 1.0).abs() > DET_RENORMALIZE {
            return Err(MorseError::Determinant { det });
        }
        let shift = logdet / m.nrows() as f64;
        let half = vals.map(|l| ((l.ln() - shift) * 0.5).exp());
        let g = &vecs * Mat::from_diagonal(&half) * vecs.transpose();
        let inv = &vecs * Mat::from_diagonal(&half.map(|h| 1.0 / h)) * vecs.transpose();
        Ok(SpdPoint {
            frame: Isometry::from_parts(g, inv),
        })
    }

    pub fn identity(n: usize) -> Self {
        SpdPoint {
            frame: Isometry::identity(n),
        }
    }

    /// The point `g · I = g gᵀ`, keeping `g` as its frame.
    pub fn from_frame(frame: Isometry) -> Self {
        SpdPoint { frame }
    }

    /// `diag(exp(logs))` after removing the mean of `logs`.
    pub fn diagonal_exp(logs: &[f64]) -> Self {
        let half: Vec<f64> = logs.iter().map(|l| l * 0.5).collect();
        SpdPoint::from_frame(Isometry::diagonal_exp(&half))
    }

    pub fn frame(&self) -> &Isometry {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn matrix(&self) -> Mat {
        let g = self.frame.matrix();
        linalg::symmetrize(&(g * g.transpose()))
    }

    pub fn inverse_matrix(&self) -> Mat {
        let gi = self.frame.inverse_matrix();
        linalg::symmetrize(&(gi.transpose() * gi))
    }

    /// `g · x = g x gᵀ`.
    pub fn transform(&self, g: &Isometry) -> SpdPoint {
        SpdPoint {
            frame: g.compose(&self.frame),
        }
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_mat(&self.matrix())
    }

    pub fn from_json(j: &MatrixJson) -> Result<Self> {
        SpdPoint::from_matrix(&j.to_mat()?)
    }
}

/// Transporter from `x` to `y`: an isometry `W` with `y = g_x W (g_x W)ᵀ`, i.e. the
/// position of `y` in the frame of `x`.
pub fn transporter(x: &SpdPoint, y: &SpdPoint) -> Isometry {
    x.frame.inverse().compose(&y.frame)
}

/// Tangent vector at `base`: a symmetric matrix with `tr(base⁻¹ V) = 0`.
#[derive(Debug, Clone)]
pub struct TangentSym {
    pub base: SpdPoint,
    pub direction: Mat,
}

impl TangentSym {
    /// Builds a tangent vector at `base` from a trace-zero symmetric matrix
    /// expressed in the frame of `base` (i.e. at the identity).
    pub fn from_frame_direction(base: &SpdPoint, w: &Mat) -> Self {
        let g = base.frame.matrix();
        TangentSym {
            base: base.clone(),
            direction: linalg::symmetrize(&(g * w * g.transpose())),
        }
    }

    /// The direction pulled back to the identity frame, `g⁻¹ V g⁻ᵀ`.
    pub fn in_frame(&self) -> Mat {
        let gi = self.base.frame.inverse_matrix();
        linalg::symmetrize(&(gi * &self.direction * gi.transpose()))
    }

    /// Riemannian norm `‖x^{-1/2} V x^{-1/2}‖_F`.
    pub fn norm(&self) -> f64 {
        self.in_frame().norm()
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.in_frame();
        if w.trace().abs() > 1e-9 * w.norm().max(1e-300) && w.norm() > 0.0 {
            return Err(MorseError::Invalid("tangent vector is not trace-free".into()));
        }
        Ok(())
    }
}

/// Riemannian angle at a common base between two tangent vectors.
pub fn tangent_angle(a: &TangentSym, b: &TangentSym) -> f64 {
    linalg::angle_between(&a.in_frame(), &b.in_frame())
}
