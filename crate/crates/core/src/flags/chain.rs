use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{MorseError, Result};
use crate::linalg::{self, Mat};
use crate::symspace::{decompose, transporter, validate_pattern, Decomposition, Isometry, SpdPoint};

/// A partial flag: nested subspaces of the dimensions listed in `pattern`,
/// each stored as an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagChain {
    pattern: Vec<usize>,
    subspaces: Vec<Mat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisJson {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub entries: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagChainJson {
    pub pattern: Vec<usize>,
    pub subspaces: Vec<BasisJson>,
}

const ORTHO_TOL: f64 = 1e-9;
const NEST_TOL: f64 = 1e-8;

impl FlagChain {
    pub fn new(pattern: Vec<usize>, subspaces: Vec<Mat>) -> Result<Self> {
        if pattern.len() != subspaces.len() {
            return Err(MorseError::Pattern(format!(
                "{} subspaces for a pattern of length {}",
                subspaces.len(),
                pattern.len()
            )));
        }
        let n = subspaces.first().map(|s| s.nrows()).unwrap_or(0);
        validate_pattern(n, &pattern)?;
        for (s, &d) in subspaces.iter().zip(&pattern) {
            if s.nrows() != n || s.ncols() != d {
                return Err(MorseError::Pattern(format!(
                    "basis of shape {}x{} where {n}x{d} was expected",
                    s.nrows(),
                    s.ncols()
                )));
            }
            let gram = s.transpose() * s;
            if (gram - Mat::identity(d, d)).amax() > ORTHO_TOL {
                return Err(MorseError::Invalid("flag basis is not orthonormal".into()));
            }
        }
        for w in subspaces.windows(2) {
            let resid = (&w[0] - linalg::projector(&w[1]) * &w[0]).amax();
            if resid > NEST_TOL {
                return Err(MorseError::Invalid(format!("flag subspaces are not nested (residual {resid:e})")));
            }
        }
        Ok(FlagChain { pattern, subspaces })
    }

    /// Flag spanned by the leading columns of `basis`, which must have full rank.
    pub fn from_basis(basis: &Mat, pattern: &[usize]) -> Result<Self> {
        let q = linalg::orthonormalize(basis);
        if q.ncols() < basis.ncols() {
            return Err(MorseError::Invalid("degenerate frame for flag".into()));
        }
        Ok(FlagChain {
            pattern: pattern.to_vec(),
            subspaces: pattern.iter().map(|&d| q.columns(0, d).into_owned()).collect(),
        })
    }

    /// `span(e_1..e_d)` for each `d`.
    pub fn standard(n: usize, pattern: &[usize]) -> Result<Self> {
        validate_pattern(n, pattern)?;
        FlagChain::from_basis(&Mat::identity(n, n), pattern)
    }

    /// `span(e_n, …, e_{n−d+1})` for each `d`.
    pub fn standard_opposite(n: usize, pattern: &[usize]) -> Result<Self> {
        validate_pattern(n, pattern)?;
        let rev = Mat::from_fn(n, n, |i, j| if i + j == n - 1 { 1.0 } else { 0.0 });
        FlagChain::from_basis(&rev, pattern)
    }

    pub fn pattern(&self) -> &[usize] {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.subspaces[0].nrows()
    }

    pub fn subspaces(&self) -> &[Mat] {
        &self.subspaces
    }

    /// Basis of the member of dimension `d`; `0` and `n` give the trivial subspaces.
    pub fn subspace(&self, d: usize) -> Option<Mat> {
        let n = self.dim();
        if d == 0 {
            return Some(Mat::zeros(n, 0));
        }
        if d == n {
            return Some(Mat::identity(n, n));
        }
        self.pattern.iter().position(|&e| e == d).map(|j| self.subspaces[j].clone())
    }

    /// Orthonormal basis adapted to the flag: the first `d_j` columns span the `d_j`-th member.
    pub fn adapted_basis(&self) -> Mat {
        let mut cols = nested_columns(&self.subspaces);
        let rest = linalg::orth_complement(&Mat::from_columns(&cols));
        cols.extend(rest.column_iter().map(|c| c.into_owned()));
        Mat::from_columns(&cols)
    }

    /// `g · F`.
    pub fn transform(&self, g: &Isometry) -> FlagChain {
        self.transform_decomposed(&decompose(g))
    }

    /// `W · F` for `W = U Σ Vᵀ`. The graded matrix `Σ Vᵀ B` is reduced by LU with partial
    /// pivoting, whose multipliers stay bounded, so directions that `W` shrinks keep their
    /// relative accuracy instead of drowning in round-off of the dominant ones.
    pub fn transform_decomposed(&self, d: &Decomposition) -> FlagChain {
        let n = self.dim();
        let sigma = nalgebra::DVector::from_iterator(n, d.log_sv.iter().map(|l| l.exp()));
        let a = Mat::from_diagonal(&sigma) * d.v.transpose() * self.adapted_basis();
        let lu = a.lu();
        let mut l = lu.l();
        lu.p().inv_permute_rows(&mut l);
        FlagChain::from_basis(&(&d.u * l), &self.pattern).expect("isometries are invertible")
    }

    /// Largest principal angle over the members; a pattern mismatch gives π/2.
    pub fn distance(&self, other: &FlagChain) -> f64 {
        if self.pattern != other.pattern || self.dim() != other.dim() {
            return std::f64::consts::FRAC_PI_2;
        }
        self.subspaces
            .iter()
            .zip(&other.subspaces)
            .map(|(a, b)| linalg::max_principal_angle(a, b))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> FlagChainJson {
        FlagChainJson {
            pattern: self.pattern.clone(),
            subspaces: self
                .subspaces
                .iter()
                .map(|s| BasisJson {
                    rows: s.nrows(),
                    cols: s.ncols(),
                    entries: s.transpose().iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_json(j: &FlagChainJson) -> Result<Self> {
        let mut subs = Vec::new();
        for b in &j.subspaces {
            if b.entries.len() != b.rows * b.cols || b.entries.iter().any(|e| !e.is_finite()) {
                return Err(MorseError::Parse("malformed flag basis".into()));
            }
            subs.push(Mat::from_row_slice(b.rows, b.cols, &b.entries));
        }
        FlagChain::new(j.pattern.clone(), subs)
    }
}

/// Checks the log-singular-value gaps of a decomposition at the pattern indices.
pub(crate) fn check_gaps(d: &Decomposition, pattern: &[usize], eigengap: f64) -> Result<()> {
    for &k in pattern {
        // Cartan gaps are twice the log-singular-value gaps.
        let gap = 2.0 * (d.log_sv[k - 1] - d.log_sv[k]);
        if !(gap > eigengap) {
            return Err(MorseError::Degenerate { index: k, gap });
        }
    }
    Ok(())
}

/// Flag of the segment, expressed in the frame of its initial point.
pub(crate) fn frame_flag(d: &Decomposition, pattern: &[usize], eigengap: f64) -> Result<FlagChain> {
    check_gaps(d, pattern, eigengap)?;
    FlagChain::from_basis(&d.u, pattern)
}

/// τ(xy): sums of dominant eigenspaces of `x^{-1/2} y x^{-1/2}` transported to `x`.
pub fn flag_of_segment(x: &SpdPoint, y: &SpdPoint, pattern: &[usize], eigengap: f64) -> Result<FlagChain> {
    if x.dim() != y.dim() {
        return Err(MorseError::Dimension {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    validate_pattern(x.dim(), pattern)?;
    let d = decompose(&transporter(x, y));
    Ok(frame_flag(&d, pattern, eigengap)?.transform(x.frame()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Antipodality {
    pub antipodal: bool,
    /// Smallest singular value of `[F₋^{(d)}, F₊^{(n−d)}]` over the pattern.
    pub margin: f64,
}

pub fn antipodal(minus: &FlagChain, plus: &FlagChain, tol: f64) -> Result<Antipodality> {
    if minus.pattern != plus.pattern || minus.dim() != plus.dim() {
        return Err(MorseError::Pattern(format!(
            "cannot compare flags of patterns {:?} and {:?}",
            minus.pattern, plus.pattern
        )));
    }
    let n = minus.dim();
    let mut margin = f64::INFINITY;
    for &d in &minus.pattern {
        let a = minus.subspace(d).expect("member");
        let b = plus.subspace(n - d).expect("ι-symmetric pattern");
        let mut stacked = Mat::zeros(n, n);
        stacked.columns_mut(0, d).copy_from(&a);
        stacked.columns_mut(d, n - d).copy_from(&b);
        margin = margin.min(linalg::smallest_singular_value(&stacked));
    }
    Ok(Antipodality {
        antipodal: margin > tol,
        margin,
    })
}

/// Attracting flag of `g`: sums of generalized eigenspaces ordered by eigenvalue modulus.
pub fn attracting_flag(g: &Isometry, pattern: &[usize], eigengap: f64) -> Result<FlagChain> {
    let n = g.dim();
    validate_pattern(n, pattern)?;
    let m = g.matrix();
    let mut eig: Vec<Complex<f64>> = m.clone().complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    for &d in pattern {
        let gap = eig[d - 1].norm().ln() - eig[d].norm().ln();
        if !(gap > eigengap) {
            return Err(MorseError::ModulusTie { index: d, gap });
        }
    }
    let top = *pattern.last().expect("nonempty pattern");
    // Range of the product of (g − λ) over the dominated eigenvalues is the
    // dominant invariant subspace; polish it with orthogonal iteration.
    let mut subs = Vec::new();
    for &d in pattern {
        let mut p = nalgebra::DMatrix::<Complex<f64>>::identity(n, n);
        let mc = m.map(|v| Complex::new(v, 0.0));
        let scale = eig[0].norm();
        for lam in &eig[d..] {
            let mut f = &mc / Complex::new(scale, 0.0);
            for i in 0..n {
                f[(i, i)] -= lam / scale;
            }
            p = f * p;
            let nrm = p.norm();
            if nrm > 0.0 {
                p /= Complex::new(nrm, 0.0);
            }
        }
        let re = p.map(|c| c.re);
        let (u, _, _) = linalg::svd_desc(&re);
        let mut q = u.columns(0, d).into_owned();
        for _ in 0..50 {
            let next = linalg::orthonormalize(&(m * &q));
            if next.ncols() < d {
                break;
            }
            let change = linalg::sin_max_principal_angle(&q, &next);
            q = next;
            if change < 1e-15 {
                break;
            }
        }
        subs.push(q);
    }
    let cols = nested_columns(&subs);
    debug_assert_eq!(cols.len(), top);
    FlagChain::from_basis(&Mat::from_columns(&cols), pattern)
}

/// Orthonormal columns such that the leading `dim(S_j)` of them span (approximately) `S_j`.
fn nested_columns(subs: &[Mat]) -> Vec<nalgebra::DVector<f64>> {
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::new();
    for s in subs {
        let d = s.ncols();
        let prev = cols.len();
        let fresh = if prev == 0 {
            s.clone()
        } else {
            let p = Mat::from_columns(&cols);
            let r = s - &p * (p.transpose() * s);
            let (u, _, _) = linalg::svd_desc(&r);
            u.columns(0, d - prev).into_owned()
        };
        cols.extend(fresh.column_iter().map(|c| c.into_owned()));
    }
    cols
}
