use super::chain::{antipodal, FlagChain};
use crate::error::{MorseError, Result};
use crate::linalg::{self, Mat};
use crate::symspace::{block_sizes, decompose, Isometry, SpdPoint};

/// The parallel set `P(F₋, F₊)`: all `g B gᵀ` with `B` block-diagonal SPD of determinant one.
#[derive(Debug, Clone)]
pub struct ParallelSet {
    pub minus: FlagChain,
    pub plus: FlagChain,
    pub transformer: Isometry,
    pub block_dims: Vec<usize>,
}

/// `A ∩ B` for orthonormal bases, assuming the intersection has dimension `k`.
fn intersect(a: &Mat, b: &Mat, k: usize) -> Mat {
    let n = a.nrows();
    if k == 0 {
        return Mat::zeros(n, 0);
    }
    let resid = a - linalg::projector(b) * a;
    let (_, _, v) = linalg::svd_desc(&resid);
    let m = a.ncols();
    linalg::orthonormalize(&(a * v.columns(m - k, k)))
}

pub fn parallel_set(minus: &FlagChain, plus: &FlagChain, tol: f64) -> Result<ParallelSet> {
    let ap = antipodal(minus, plus, tol)?;
    if !ap.antipodal {
        return Err(MorseError::NotAntipodal { margin: ap.margin });
    }
    let n = plus.dim();
    let mut cuts = vec![0];
    cuts.extend_from_slice(plus.pattern());
    cuts.push(n);
    let block_dims = block_sizes(n, plus.pattern());
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    for j in 0..block_dims.len() {
        let p = plus.subspace(cuts[j + 1]).expect("member");
        let m = minus.subspace(n - cuts[j]).expect("ι-symmetric pattern");
        let blk = intersect(&p, &m, block_dims[j]);
        if blk.ncols() != block_dims[j] {
            return Err(MorseError::Invalid("degenerate refinement block".into()));
        }
        cols.extend(blk.column_iter().map(|c| c.into_owned()));
    }
    let transformer = Isometry::normalized(Mat::from_columns(&cols))?;
    Ok(ParallelSet {
        minus: minus.clone(),
        plus: plus.clone(),
        transformer,
        block_dims,
    })
}

impl ParallelSet {
    /// The set `g · P(standard opposite, standard)` for an isometry `g`.
    pub fn from_transformer(transformer: Isometry, pattern: &[usize]) -> Result<Self> {
        let n = transformer.dim();
        let plus = FlagChain::standard(n, pattern)?.transform(&transformer);
        let minus = FlagChain::standard_opposite(n, pattern)?.transform(&transformer);
        Ok(ParallelSet {
            minus,
            plus,
            block_dims: block_sizes(n, pattern),
            transformer,
        })
    }

    fn offsets(&self) -> Vec<usize> {
        let mut o = vec![0];
        for b in &self.block_dims {
            o.push(o.last().unwrap() + b);
        }
        o
    }

    /// Zeroes the off-block-diagonal entries.
    pub fn block_part(&self, m: &Mat) -> Mat {
        let o = self.offsets();
        let mut out = Mat::zeros(m.nrows(), m.ncols());
        for j in 0..self.block_dims.len() {
            let (s, d) = (o[j], self.block_dims[j]);
            out.view_mut((s, s), (d, d)).copy_from(&m.view((s, s), (d, d)));
        }
        out
    }

    /// `g · B` for a block-diagonal SPD matrix `B` given by its frame.
    pub fn point_from_block_frame(&self, b: &Isometry) -> SpdPoint {
        SpdPoint::from_frame(self.transformer.compose(b))
    }

    /// Block-diagonal point `exp(H)` carried into the set, for trace-zero symmetric `H`.
    pub fn point_from_log(&self, h: &Mat) -> SpdPoint {
        let h = self.block_part(&linalg::symmetrize(h));
        let half = linalg::sym_exp(&(&h * 0.5));
        let inv = linalg::sym_exp(&(&h * -0.5));
        self.point_from_block_frame(&Isometry::from_parts(half, inv))
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub point: SpdPoint,
    /// Block-diagonal frame `b` with `point = transformer · b`.
    pub block_frame: Isometry,
    pub distance: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Distance from the block-diagonal truncation used as the starting guess.
    pub initial_distance: f64,
}

const MAX_ITER: usize = 500;

/// Initial guess: block-diagonal truncation of `x' = g⁻¹ x g⁻ᵀ`, rescaled to determinant one.
fn truncation_frame(ps: &ParallelSet, xf: &Isometry) -> Option<Isometry> {
    let n = xf.dim();
    let f = xf.matrix();
    let o = ps.offsets();
    let mut root = Mat::zeros(n, n);
    let mut inv = Mat::zeros(n, n);
    for j in 0..ps.block_dims.len() {
        let (s, d) = (o[j], ps.block_dims[j]);
        let rows = f.rows(s, d);
        let blk = rows * rows.transpose();
        let (vals, _) = linalg::sym_eigen_desc(&blk);
        if !(vals[d - 1] > 0.0) || !vals[0].is_finite() {
            return None;
        }
        root.view_mut((s, s), (d, d)).copy_from(&linalg::sym_apply(&blk, f64::sqrt));
        inv.view_mut((s, s), (d, d)).copy_from(&linalg::sym_apply(&blk, |v| 1.0 / v.sqrt()));
    }
    let det = linalg::determinant(&root);
    if !(det > 0.0 && det.is_finite()) {
        return None;
    }
    let c = det.powf(1.0 / n as f64);
    Some(Isometry::from_parts(root / c, inv * c))
}

/// Gradient data of `½ d(b, x')²` in the frame of `b`: the block part of `Log_b(x')`
/// (the negative gradient) and the distance.
fn evaluate(ps: &ParallelSet, b: &Isometry, xf: &Isometry) -> (Mat, f64) {
    let w = b.inverse().compose(xf);
    let d = decompose(&w);
    let logs = nalgebra::DVector::from_iterator(d.log_sv.len(), d.log_sv.iter().map(|l| 2.0 * l));
    let log_map = &d.u * Mat::from_diagonal(&logs) * d.u.transpose();
    (ps.block_part(&linalg::symmetrize(&log_map)), logs.norm())
}

fn step_frame(b: &Isometry, s: &Mat, t: f64) -> Isometry {
    b.compose(&Isometry::from_parts(linalg::sym_exp(&(s * (0.5 * t))), linalg::sym_exp(&(s * (-0.5 * t)))))
}

/// Exact line search along the geodesic `t ↦ b exp(tS) bᵀ`. The objective is convex along
/// it, so its slope `−⟨G(t), S⟩` is monotone and we bracket and bisect its zero. Slopes
/// stay meaningful where function values are dominated by round-off.
fn line_search(ps: &ParallelSet, b: &Isometry, s: &Mat, xf: &Isometry) -> f64 {
    let slope = |t: f64| -linalg::frob(&evaluate(ps, &step_frame(b, s, t), xf).0, s);
    let s0 = slope(0.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut shi = slope(hi);
    while shi < 0.0 && hi < 1e6 {
        lo = hi;
        hi *= 2.0;
        shi = slope(hi);
    }
    if shi < 0.0 {
        return hi;
    }
    let mut slo = if lo == 0.0 { s0 } else { slope(lo) };
    for _ in 0..60 {
        // Regula falsi with a bisection safeguard.
        let mut t = lo + (hi - lo) * (-slo / (shi - slo));
        if !(t > lo && t < hi) || (t - lo).min(hi - t) < 0.01 * (hi - lo) {
            t = 0.5 * (lo + hi);
        }
        let st = slope(t);
        if st.abs() <= 1e-3 * s0.abs() {
            return t;
        }
        if st < 0.0 {
            lo = t;
            slo = st;
        } else {
            hi = t;
            shi = st;
        }
    }
    0.5 * (lo + hi)
}

/// Nearest-point projection to the parallel set by Riemannian steepest descent on the
/// block-diagonal submanifold. The objective is geodesically convex, so a stationary
/// point is the global minimizer.
pub fn project_to_parallel_set(x: &SpdPoint, ps: &ParallelSet, tol: f64) -> Result<Projection> {
    if x.dim() != ps.transformer.dim() {
        return Err(MorseError::Dimension {
            expected: ps.transformer.dim(),
            got: x.dim(),
        });
    }
    project_frame(ps, &ps.transformer.inverse().compose(x.frame()), tol)
}

/// Projection of the point with frame `transformer · xf`.
pub fn project_frame(ps: &ParallelSet, xf: &Isometry, tol: f64) -> Result<Projection> {
    let n = xf.dim();
    let mut b = truncation_frame(ps, xf).unwrap_or_else(|| Isometry::identity(n));
    let (mut grad, mut dist) = evaluate(ps, &b, xf);
    let initial_distance = dist;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for it in 0..MAX_ITER {
        let gn = grad.norm();
        let done = |b: &Isometry| Projection {
            point: ps.point_from_block_frame(b),
            block_frame: b.clone(),
            distance: dist,
            gradient_norm: gn,
            iterations: it,
            initial_distance,
        };
        if gn <= tol {
            return Ok(done(&b));
        }
        if gn < 0.5 * best {
            best = gn;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled > 20 {
            // Round-off floor of the gradient evaluation.
            if gn <= 1e3 * tol * (1.0 + dist) {
                return Ok(done(&b));
            }
            return Err(MorseError::NoConvergence {
                iterations: it,
                residual: gn,
            });
        }
        let t = line_search(ps, &b, &grad, xf);
        let nb = step_frame(&b, &grad, t);
        let (ng, nd) = evaluate(ps, &nb, xf);
        if nd > dist + 1e-12 * (1.0 + dist) {
            stalled += 1;
            continue;
        }
        b = nb;
        grad = ng;
        dist = nd;
    }
    Err(MorseError::NoConvergence {
        iterations: MAX_ITER,
        residual: grad.norm(),
    })
}
