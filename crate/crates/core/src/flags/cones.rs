use serde::{Deserialize, Serialize};

use super::chain::{frame_flag, FlagChain};
use crate::error::{MorseError, Result};
use crate::linalg::{self, Mat};
use crate::symspace::{
    decompose, regularity_of, transporter, weyl_max_pairing, CartanVector, Decomposition, Isometry, SpdPoint,
    ThetaSpec, TypeVector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeDefect {
    /// Largest principal angle between τ(apex z) and the target flag.
    pub flag_mismatch: f64,
    pub type_margin: f64,
    pub verdict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Membership of `z` in the Θ-cone `V(apex, st_Θ(F))`.
pub fn cone_membership(
    apex: &SpdPoint,
    f: &FlagChain,
    z: &SpdPoint,
    theta: &ThetaSpec,
    eigengap: f64,
    flag_tol: f64,
) -> Result<ConeDefect> {
    if apex.dim() != z.dim() || f.dim() != z.dim() {
        return Err(MorseError::Dimension {
            expected: apex.dim(),
            got: z.dim(),
        });
    }
    let d = decompose(&transporter(apex, z));
    let local = f.transform(&apex.frame().inverse());
    Ok(cone_defect_in_frame(&d, &local, theta, eigengap, flag_tol))
}

/// Cone membership with the segment given by its decomposition and the flag in the apex frame.
pub fn cone_defect_in_frame(
    d: &Decomposition,
    local_flag: &FlagChain,
    theta: &ThetaSpec,
    eigengap: f64,
    flag_tol: f64,
) -> ConeDefect {
    let reject = |reason: String, margin: f64| ConeDefect {
        flag_mismatch: std::f64::consts::FRAC_PI_2,
        type_margin: margin,
        verdict: false,
        reason: Some(reason),
    };
    let c = d.cartan();
    let reg = match regularity_of(&c, theta, eigengap) {
        Ok(r) => r,
        Err(MorseError::Coincident) => return reject("point coincides with the apex".into(), f64::NEG_INFINITY),
        Err(e) => return reject(e.to_string(), f64::NEG_INFINITY),
    };
    let seg = match frame_flag(d, local_flag.pattern(), eigengap) {
        Ok(s) => s,
        Err(e) => return reject(e.to_string(), reg.margin),
    };
    let mismatch = seg.distance(local_flag);
    ConeDefect {
        flag_mismatch: mismatch,
        type_margin: reg.margin,
        verdict: mismatch <= flag_tol && reg.margin >= 0.0,
        reason: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiamondDefect {
    /// `d^θ̄(x,z) + d^θ̄(z,y) − d^θ̄(x,y)`.
    pub finsler_gap: f64,
    /// Θ-margin of `xz`; `None` when `z` is at `x`.
    pub margin_xz: Option<f64>,
    /// Θ-margin of `zy`; `None` when `z` is at `y`.
    pub margin_zy: Option<f64>,
    pub member: bool,
}

fn margin_or_tip(c: &CartanVector, theta: &ThetaSpec, tip_tol: f64) -> Option<f64> {
    if c.norm() <= tip_tol {
        return None;
    }
    Some(regularity_of(c, theta, 0.0).map(|r| r.margin).unwrap_or(f64::NEG_INFINITY))
}

/// Diamond defect from the three relative positions.
pub fn diamond_defect_from_cartan(
    xz: &CartanVector,
    zy: &CartanVector,
    xy: &CartanVector,
    theta: &ThetaSpec,
    finsler_type: &TypeVector,
    tol: f64,
) -> DiamondDefect {
    let gap = weyl_max_pairing(finsler_type, xz) + weyl_max_pairing(finsler_type, zy) - weyl_max_pairing(finsler_type, xy);
    let m1 = margin_or_tip(xz, theta, tol);
    let m2 = margin_or_tip(zy, theta, tol);
    let ok = |m: Option<f64>| m.is_none_or(|v| v >= 0.0);
    DiamondDefect {
        finsler_gap: gap,
        margin_xz: m1,
        margin_zy: m2,
        member: gap <= tol && ok(m1) && ok(m2),
    }
}

/// Membership of `z` in the Θ-diamond `◊_Θ(x, y)`, with `tol` scaled by `1 + d(x,y)`.
pub fn diamond_defect(
    x: &SpdPoint,
    y: &SpdPoint,
    z: &SpdPoint,
    theta: &ThetaSpec,
    finsler_type: &TypeVector,
    tol: f64,
) -> Result<DiamondDefect> {
    if x.dim() != y.dim() || x.dim() != z.dim() {
        return Err(MorseError::Dimension {
            expected: x.dim(),
            got: if x.dim() != y.dim() { y.dim() } else { z.dim() },
        });
    }
    let xy = decompose(&transporter(x, y)).cartan();
    if xy.norm() == 0.0 {
        return Err(MorseError::Coincident);
    }
    let xz = decompose(&transporter(x, z)).cartan();
    let zy = decompose(&transporter(z, y)).cartan();
    Ok(diamond_defect_from_cartan(&xz, &zy, &xy, theta, finsler_type, tol * (1.0 + xy.norm())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiamondBound {
    /// `d(z, u) + 2√gap` for the candidate `u`; infinite if no candidate was found.
    /// The slack covers the residual gap, which vanishes quadratically at the diamond.
    pub bound: f64,
    pub finsler_gap: f64,
    pub iterations: usize,
    pub found: bool,
}

const BOUND_ITER: usize = 400;

/// Upper bound on the distance from `z` to `◊_Θ(p, q)`, where `a` is the transporter
/// `p → z` and `b` the transporter `z → q`. Moves a candidate `u = z·k` by Polyak
/// subgradient steps on the (convex) Finsler gap until it enters the diamond.
pub fn diamond_distance_bound(
    a: &Isometry,
    b: &Isometry,
    theta: &ThetaSpec,
    finsler_type: &TypeVector,
    tol: f64,
) -> DiamondBound {
    let n = a.dim();
    let pq = decompose(&a.compose(b)).cartan();
    let loose = tol * (1.0 + pq.norm());
    let tight = 1e-4 * loose;
    let target = weyl_max_pairing(finsler_type, &pq);
    let th = Mat::from_diagonal(&nalgebra::DVector::from_row_slice(finsler_type.coords()));
    let mut k = Isometry::identity(n);
    let mut best: Option<DiamondBound> = None;
    let mut gap = f64::INFINITY;
    for it in 0..=BOUND_ITER {
        let da = decompose(&a.compose(&k));
        let db = decompose(&k.inverse().compose(b));
        let (ca, cb) = (da.cartan(), db.cartan());
        gap = weyl_max_pairing(finsler_type, &ca) + weyl_max_pairing(finsler_type, &cb) - target;
        let dd = diamond_defect_from_cartan(&ca, &cb, &pq, theta, finsler_type, loose);
        if dd.member {
            let cand = DiamondBound {
                bound: decompose(&k).cartan().norm() + 2.0 * gap.max(0.0).sqrt(),
                finsler_gap: gap,
                iterations: it,
                found: true,
            };
            if gap <= tight {
                return cand;
            }
            if best.as_ref().is_none_or(|b| cand.bound < b.bound) {
                best = Some(cand);
            }
        } else if gap <= loose {
            // On a Finsler geodesic but outside the Θ-cones: no cheap repair.
            break;
        }
        let grad = &da.v * &th * da.v.transpose() - &db.u * &th * db.u.transpose();
        let grad = linalg::symmetrize(&grad);
        let g2 = grad.norm_squared();
        if g2 < 1e-300 {
            break;
        }
        let step = &grad * (-gap.max(0.0) / g2);
        let e = Isometry::from_parts(linalg::sym_exp(&(&step * 0.5)), linalg::sym_exp(&(&step * -0.5)));
        k = k.compose(&e);
    }
    best.unwrap_or(DiamondBound {
        bound: f64::INFINITY,
        finsler_gap: gap,
        iterations: BOUND_ITER,
        found: false,
    })
}
