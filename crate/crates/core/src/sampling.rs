//! Seeded random generation of points, isometries and rotations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, Mat};
use crate::paths::PointSequence;
use crate::symspace::{Isometry, SpdPoint, ThetaSpec, TypeVector};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, n: usize) -> Mat {
    Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-random rotation in SO(n).
pub fn rotation(rng: &mut impl Rng, n: usize) -> Mat {
    let q = linalg::orthonormalize(&gaussian_matrix(rng, n));
    let mut q = if q.ncols() == n { q } else { Mat::identity(n, n) };
    if linalg::determinant(&q) < 0.0 {
        let c = -q.column(0).into_owned();
        q.set_column(0, &c);
    }
    q
}

pub fn rotation_isometry(rng: &mut impl Rng, n: usize) -> Isometry {
    let q = rotation(rng, n);
    Isometry::from_parts(q.clone(), q.transpose())
}

/// Random trace-zero symmetric matrix with Frobenius norm `scale`.
pub fn symmetric_direction(rng: &mut impl Rng, n: usize, scale: f64) -> Mat {
    let g = gaussian_matrix(rng, n);
    let mut s = linalg::symmetrize(&g);
    let tr = s.trace() / n as f64;
    for i in 0..n {
        s[(i, i)] -= tr;
    }
    let nrm = s.norm();
    if nrm == 0.0 {
        return s;
    }
    s * (scale / nrm)
}

/// Random point at distance `radius` from `base` in a uniformly random direction.
pub fn point_at_distance(rng: &mut impl Rng, base: &SpdPoint, radius: f64) -> SpdPoint {
    let n = base.dim();
    let w = symmetric_direction(rng, n, radius);
    let half = linalg::sym_exp(&(&w * 0.5));
    let half_inv = linalg::sym_exp(&(&w * -0.5));
    base.frame_compose(&Isometry::from_parts(half, half_inv))
}

/// Random point with distance from the identity uniform in `[0, max_radius]`.
pub fn spd_point(rng: &mut impl Rng, n: usize, max_radius: f64) -> SpdPoint {
    let r = rng.random::<f64>() * max_radius;
    point_at_distance(rng, &SpdPoint::identity(n), r)
}

/// Random isometry: rotation times a random transvection of size up to `max_log`.
pub fn isometry(rng: &mut impl Rng, n: usize, max_log: f64) -> Isometry {
    let q = rotation_isometry(rng, n);
    let p = spd_point(rng, n, max_log);
    p.frame().compose(&q)
}

/// Point at distance at most `max_radius` from `base`, used to perturb samples.
pub fn perturb(rng: &mut impl Rng, base: &SpdPoint, max_radius: f64) -> SpdPoint {
    let r = rng.random::<f64>() * max_radius;
    point_at_distance(rng, base, r)
}

/// Shape of a synthetic sequence marching through a randomly placed maximal flat.
#[derive(Debug, Clone)]
pub struct FlatMarch {
    /// Mean Cartan direction of a step (any positive multiple).
    pub direction: Vec<f64>,
    /// Step lengths are uniform in this range.
    pub step_range: (f64, f64),
    /// Size of the random trace-zero wobble added to each unit step direction.
    pub spread: f64,
    /// Each point is moved off the flat by at most this distance.
    pub jitter: f64,
    /// Each step rotates the flat by a random rotation of at most this size, so the
    /// sequence bends away from any single flat.
    pub turn: f64,
    pub len: usize,
}

/// Rotation close to `exp(S)` for a random skew `S` with Frobenius norm at most `size`.
fn small_rotation(rng: &mut impl Rng, n: usize, size: f64) -> Mat {
    let g = gaussian_matrix(rng, n);
    let skew = (&g - g.transpose()) * 0.5;
    let nrm = skew.norm();
    let r = rng.random::<f64>() * size;
    let s = if nrm > 0.0 { skew * (r / nrm) } else { skew };
    linalg::orthonormalize(&(Mat::identity(n, n) + s))
}

fn unit_trace_zero(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let w: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter().map(|x| x / nrm).collect()
}

/// Random sequence `x_k = g D_k exp(P_k) D_k gᵀ` with `D_k` diagonal and small symmetric
/// jitters `P_k`; with `turn > 0` the flat drifts from step to step. Steps are assembled
/// directly as transporters, so no large matrix is ever formed.
pub fn flat_march(rng: &mut impl Rng, m: &FlatMarch) -> PointSequence {
    let n = m.direction.len();
    let center = unit_trace_zero(&m.direction);
    let jitter: Vec<(Mat, Mat)> = (0..m.len)
        .map(|_| {
            let r = rng.random::<f64>() * m.jitter;
            let w = symmetric_direction(rng, n, r);
            (linalg::sym_exp(&(&w * 0.5)), linalg::sym_exp(&(&w * -0.5)))
        })
        .collect();
    let mut steps = Vec::with_capacity(m.len.saturating_sub(1));
    for k in 0..m.len.saturating_sub(1) {
        let wobble: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * m.spread).collect();
        let dir: Vec<f64> = center.iter().zip(&wobble).map(|(c, w)| c + w).collect();
        let dir = unit_trace_zero(&dir);
        let (lo, hi) = m.step_range;
        let len = lo + (hi - lo) * rng.random::<f64>();
        let half: Vec<f64> = dir.iter().map(|d| 0.5 * len * d).collect();
        let d = Isometry::diagonal_exp(&half);
        let (dm, di) = if m.turn > 0.0 && k > 0 {
            let q = small_rotation(rng, n, m.turn);
            (&q * d.matrix(), d.inverse_matrix() * q.transpose())
        } else {
            (d.matrix().clone(), d.inverse_matrix().clone())
        };
        let g = &jitter[k].1 * dm * &jitter[k + 1].0;
        let gi = &jitter[k + 1].1 * di * &jitter[k].0;
        steps.push(Isometry::from_parts(g, gi));
    }
    let g = isometry(rng, n, 2.0);
    let base = SpdPoint::from_frame(g.compose(&Isometry::from_parts(jitter[0].0.clone(), jitter[0].1.clone())));
    PointSequence::from_steps((0..m.len as i64).collect(), base, steps).expect("consistent by construction")
}

/// Unit sorted trace-zero vector whose type lies in `Θ`, by rejection sampling.
/// `None` if no sample was accepted after `tries` draws.
pub fn direction_in(rng: &mut impl Rng, theta: &ThetaSpec, tries: usize) -> Option<Vec<f64>> {
    for _ in 0..tries {
        let mut v: Vec<f64> = (0..theta.n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        let v = unit_trace_zero(&v);
        if let Ok(t) = TypeVector::new(v.clone()) {
            if theta.contains(&t) {
                return Some(v);
            }
        }
    }
    None
}
