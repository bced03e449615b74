use super::chain::{frame_flag, FlagChain};
use crate::error::{MorseError, Result};
use crate::linalg::{self, Mat};
use crate::symspace::{decompose, transporter, Isometry, SpdPoint, TangentSym, TypeVector};

fn check_zeta(f: &FlagChain, zeta: &TypeVector) -> Result<()> {
    if zeta.dim() != f.dim() {
        return Err(MorseError::InvalidType(format!(
            "ζ has length {} but flags live in dimension {}",
            zeta.dim(),
            f.dim()
        )));
    }
    if !zeta.is_face_interior(f.pattern(), 1e-9) {
        return Err(MorseError::InvalidType(format!(
            "ζ is not constant on the blocks of pattern {:?}",
            f.pattern()
        )));
    }
    Ok(())
}

fn check_dim(x: &SpdPoint, f: &FlagChain) -> Result<()> {
    if x.dim() != f.dim() {
        return Err(MorseError::Dimension {
            expected: x.dim(),
            got: f.dim(),
        });
    }
    Ok(())
}

/// Unit direction toward ζ(F) at the identity, with `F` given in that frame:
/// `q diag(ζ) qᵀ` for an adapted orthonormal basis `q`.
pub fn zeta_direction_at_identity(f: &FlagChain, zeta: &TypeVector) -> Result<Mat> {
    check_zeta(f, zeta)?;
    let q = f.adapted_basis();
    if q.ncols() != f.dim() {
        return Err(MorseError::Invalid("degenerate frame for flag".into()));
    }
    let d = Mat::from_diagonal(&nalgebra::DVector::from_row_slice(zeta.coords()));
    Ok(linalg::symmetrize(&(&q * d * q.transpose())))
}

/// Unit tangent vector at `x` pointing to the ideal point ζ(F).
pub fn zeta_direction(x: &SpdPoint, f: &FlagChain, zeta: &TypeVector) -> Result<TangentSym> {
    check_dim(x, f)?;
    let local = f.transform(&x.frame().inverse());
    let w = zeta_direction_at_identity(&local, zeta)?;
    Ok(TangentSym::from_frame_direction(x, &w))
}

/// ζ-angle between two flags seen from the identity (flags in that frame).
pub fn zeta_angle_at_identity(f1: &FlagChain, f2: &FlagChain, zeta: &TypeVector) -> Result<f64> {
    let w1 = zeta_direction_at_identity(f1, zeta)?;
    let w2 = zeta_direction_at_identity(f2, zeta)?;
    Ok(linalg::angle_between(&w1, &w2))
}

/// `∠^ζ_x(F1, F2)`.
pub fn zeta_angle(x: &SpdPoint, f1: &FlagChain, f2: &FlagChain, zeta: &TypeVector) -> Result<f64> {
    check_dim(x, f1)?;
    check_dim(x, f2)?;
    let inv = x.frame().inverse();
    zeta_angle_at_identity(&f1.transform(&inv), &f2.transform(&inv), zeta)
}

/// `∠^ζ_x(F, y)`: the ζ-angle between F and the flag of the segment `xy`.
pub fn zeta_angle_to_point(
    x: &SpdPoint,
    f: &FlagChain,
    y: &SpdPoint,
    zeta: &TypeVector,
    eigengap: f64,
) -> Result<f64> {
    check_dim(x, f)?;
    if y.dim() != x.dim() {
        return Err(MorseError::Dimension {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let seg = frame_flag(&decompose(&transporter(x, y)), f.pattern(), eigengap)?;
    zeta_angle_at_identity(&seg, &f.transform(&x.frame().inverse()), zeta)
}

/// ζ-angle at a point between the flags of two outgoing segments, given by their
/// transporters from that point. Stays accurate for long segments.
pub fn zeta_angle_between_segments(
    w1: &Isometry,
    w2: &Isometry,
    pattern: &[usize],
    zeta: &TypeVector,
    eigengap: f64,
) -> Result<f64> {
    let f1 = frame_flag(&decompose(w1), pattern, eigengap)?;
    let f2 = frame_flag(&decompose(w2), pattern, eigengap)?;
    zeta_angle_at_identity(&f1, &f2, zeta)
}
