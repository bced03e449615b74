//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Everything here works on `DMatrix<f64>`; sizes are tiny (n ≤ 6 in practice) so
//! clarity wins over allocation tricks.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Symmetric part `(m + mᵀ)/2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted nonincreasing.
pub fn sym_eigen_desc(m: &Mat) -> (Vector, Mat) {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = Vector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Mat::zeros(n, n);
    for (j, &i) in idx.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Applies a scalar function to the spectrum of a symmetric matrix.
pub fn sym_apply(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, vecs) = sym_eigen_desc(m);
    let d = Mat::from_diagonal(&vals.map(f));
    &vecs * d * vecs.transpose()
}

pub fn sym_exp(m: &Mat) -> Mat {
    sym_apply(m, f64::exp)
}

fn to_faer(m: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition with singular values sorted nonincreasing.
/// Returns `(u, sigma, v)` with `m = u · diag(sigma) · vᵀ`.
///
/// Delegates to faer: the nalgebra SVD loses accuracy on rank-deficient inputs.
pub fn svd_desc(m: &Mat) -> (Mat, Vector, Mat) {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return (Mat::zeros(m.nrows(), 0), Vector::zeros(0), Mat::zeros(m.ncols(), 0));
    }
    // Entries of deep orbit transporters span many orders of magnitude; unit scale
    // helps convergence.
    let scale = m.amax();
    let scale = if scale.is_normal() { scale } else { 1.0 };
    let unit = m / scale;
    let (u, sv, v) = match to_faer(&unit).thin_svd() {
        Ok(svd) => (
            from_faer(svd.U()),
            Vector::from_iterator(k, svd.S().column_vector().iter().copied()),
            from_faer(svd.V()),
        ),
        Err(_) => {
            let svd = unit
                .clone()
                .try_svd(true, true, f64::EPSILON, 100_000)
                .unwrap_or_else(|| panic!("svd did not converge (finite input: {})", m.iter().all(|x| x.is_finite())));
            (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap().transpose())
        }
    };
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let s = Vector::from_iterator(k, idx.iter().map(|&i| sv[i] * scale));
    let uu = Mat::from_columns(&idx.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let vv = Mat::from_columns(&idx.iter().map(|&i| v.column(i)).collect::<Vec<_>>());
    (uu, s, vv)
}

pub fn singular_values(m: &Mat) -> Vector {
    svd_desc(m).1
}

pub fn spectral_norm(m: &Mat) -> f64 {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0.0;
    }
    singular_values(m)[0]
}

pub fn smallest_singular_value(m: &Mat) -> f64 {
    let s = singular_values(m);
    if s.is_empty() {
        return 0.0;
    }
    s[s.len() - 1]
}

/// Orthonormal basis for the column span (modified Gram–Schmidt, two passes).
/// Columns that fall below `1e-12` relative norm are dropped.
pub fn orthonormalize(m: &Mat) -> Mat {
    let mut cols: Vec<Vector> = Vec::with_capacity(m.ncols());
    let scale = m.norm().max(1e-300);
    for j in 0..m.ncols() {
        let mut v: Vector = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &cols {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-12 * scale {
            cols.push(v / nv);
        }
    }
    if cols.is_empty() {
        return Mat::zeros(m.nrows(), 0);
    }
    Mat::from_columns(&cols)
}

/// Orthonormal completion: returns an `n × (n − k)` basis of the orthogonal complement
/// of the span of the (orthonormal) columns of `basis`.
pub fn orth_complement(basis: &Mat) -> Mat {
    let n = basis.nrows();
    let k = basis.ncols();
    let mut all = basis.clone().insert_columns(k, n, 0.0);
    for i in 0..n {
        all[(i, k + i)] = 1.0;
    }
    let full = orthonormalize(&all);
    full.columns(k, full.ncols() - k).into_owned()
}

/// Orthogonal projector onto the span of orthonormal columns.
pub fn projector(basis: &Mat) -> Mat {
    basis * basis.transpose()
}

/// Sine of the largest principal angle between two subspaces of equal dimension,
/// given by orthonormal bases. Uses the residual form `‖b − a aᵀ b‖₂`, which stays
/// accurate for nearly coincident subspaces.
pub fn sin_max_principal_angle(a: &Mat, b: &Mat) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let resid = b - a * (a.transpose() * b);
    spectral_norm(&resid).min(1.0)
}

/// Largest principal angle, in radians.
pub fn max_principal_angle(a: &Mat, b: &Mat) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let s = sin_max_principal_angle(a, b);
    let c = smallest_singular_value(&(a.transpose() * b)).min(1.0);
    s.atan2(c)
}

/// Frobenius inner product.
pub fn frob(a: &Mat, b: &Mat) -> f64 {
    a.component_mul(b).sum()
}

/// Angle between two nonzero vectors in a Euclidean inner product, computed via
/// `2·atan2(|â − b̂|, |â + b̂|)` for accuracy near 0 and π.
pub fn angle_between(a: &Mat, b: &Mat) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    let ua = a / na;
    let ub = b / nb;
    2.0 * (&ua - &ub).norm().atan2((&ua + &ub).norm())
}

pub fn determinant(m: &Mat) -> f64 {
    m.clone().determinant()
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    let scale = m.norm().max(1.0);
    (m - m.transpose()).norm() <= tol * scale
}

/// `‖QᵀQ − I‖_max ≤ tol`.
pub fn is_orthonormal(q: &Mat, tol: f64) -> bool {
    let g = q.tr_mul(q) - Mat::identity(q.ncols(), q.ncols());
    g.amax() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthogonal() {
        let b = orthonormalize(&Mat::from_row_slice(3, 1, &[1.0, 2.0, 2.0]));
        let c = orth_complement(&b);
        assert_eq!(c.ncols(), 2);
        assert!((b.transpose() * &c).norm() < 1e-14);
        assert!((c.transpose() * &c - Mat::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn principal_angle_of_coordinate_lines() {
        let a = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = Mat::from_row_slice(2, 1, &[1.0, 1.0]) / 2f64.sqrt();
        assert!((max_principal_angle(&a, &b) - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
    }

    #[test]
    fn svd_is_sorted() {
        let m = Mat::from_row_slice(3, 3, &[0.1, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 2.0]);
        let (u, s, v) = svd_desc(&m);
        assert!(s[0] >= s[1] && s[1] >= s[2]);
        let back = &u * Mat::from_diagonal(&s) * v.transpose();
        assert!((back - m).norm() < 1e-13);
    }
}
