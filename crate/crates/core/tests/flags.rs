use std::f64::consts::{E, PI};

use morse_core::flags::*;
use morse_core::linalg::{self, Mat};
use morse_core::sampling;
use morse_core::symspace::*;
use nalgebra::DVector;

fn diag(v: &[f64]) -> SpdPoint {
    SpdPoint::from_matrix(&Mat::from_diagonal(&DVector::from_row_slice(v))).unwrap()
}

fn spans_equal(a: &Mat, b: &Mat, tol: f64) -> bool {
    a.ncols() == b.ncols() && linalg::sin_max_principal_angle(a, b) < tol
}

fn e(n: usize, idx: &[usize]) -> Mat {
    Mat::from_fn(n, idx.len(), |i, j| if i == idx[j] { 1.0 } else { 0.0 })
}

#[test]
fn segment_flag_of_ordered_diagonal() {
    let f = flag_of_segment(&SpdPoint::identity(3), &diag(&[E * E, E, (-3f64).exp()]), &[1, 2], 1e-7).unwrap();
    assert!(spans_equal(&f.subspaces()[0], &e(3, &[0]), 1e-12));
    assert!(spans_equal(&f.subspaces()[1], &e(3, &[0, 1]), 1e-12));
}

#[test]
fn segment_flag_of_permuted_diagonal() {
    let f = flag_of_segment(&SpdPoint::identity(3), &diag(&[(-3f64).exp(), E, E * E]), &[1, 2], 1e-7).unwrap();
    assert!(spans_equal(&f.subspaces()[0], &e(3, &[2]), 1e-12));
    assert!(spans_equal(&f.subspaces()[1], &e(3, &[2, 1]), 1e-12));
}

#[test]
fn segment_flag_rejects_degenerate_gap() {
    let r = flag_of_segment(&SpdPoint::identity(3), &diag(&[E, E, 1.0 / (E * E)]), &[1, 2], 1e-7);
    assert!(matches!(r, Err(morse_core::MorseError::Degenerate { index: 1, .. })));
}

#[test]
fn segment_flag_equivariance() {
    let mut rng = sampling::rng(11);
    for _ in 0..20 {
        let x = sampling::spd_point(&mut rng, 3, 2.0);
        let y = sampling::point_at_distance(&mut rng, &x, 3.0);
        let g = sampling::isometry(&mut rng, 3, 1.5);
        let f = flag_of_segment(&x, &y, &[1, 2], 1e-7).unwrap();
        let fg = flag_of_segment(&x.transform(&g), &y.transform(&g), &[1, 2], 1e-7).unwrap();
        assert!(fg.distance(&f.transform(&g)) < 1e-8);
    }
}

#[test]
fn flag_json_round_trip() {
    let f = FlagChain::standard_opposite(4, &[1, 2, 3]).unwrap();
    let j = serde_json::to_string(&f.to_json()).unwrap();
    let back = FlagChain::from_json(&serde_json::from_str(&j).unwrap()).unwrap();
    assert!(back.distance(&f) < 1e-15);
    let bad = FlagChainJson {
        pattern: vec![1, 2],
        subspaces: vec![
            BasisJson { rows: 3, cols: 1, entries: vec![1.0, 0.0, 0.0] },
            BasisJson { rows: 3, cols: 2, entries: vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0] },
        ],
    };
    assert!(FlagChain::from_json(&bad).is_err());
}

#[test]
fn antipodality_examples() {
    let p = FlagChain::standard(3, &[1, 2]).unwrap();
    let m = FlagChain::standard_opposite(3, &[1, 2]).unwrap();
    let a = antipodal(&m, &p, 1e-6).unwrap();
    assert!(a.antipodal && (a.margin - 1.0).abs() < 1e-12);
    assert!(!antipodal(&p, &p, 1e-6).unwrap().antipodal);
    let other = FlagChain::standard(4, &[2]).unwrap();
    assert!(antipodal(&p, &other, 1e-6).is_err());
}

#[test]
fn forward_and_backward_segment_flags_are_antipodal() {
    let mut rng = sampling::rng(3);
    for _ in 0..20 {
        let x = sampling::spd_point(&mut rng, 4, 2.0);
        let y = sampling::point_at_distance(&mut rng, &x, 2.5);
        for pat in [vec![1, 3], vec![2], vec![1, 2, 3]] {
            let fp = flag_of_segment(&x, &y, &pat, 1e-7).unwrap();
            let fm = flag_of_segment(&y, &x, &pat, 1e-7).unwrap();
            // Direct-sum oracle: rank of the stacked bases.
            for &d in &pat {
                let a = fm.subspace(d).unwrap();
                let b = fp.subspace(4 - d).unwrap();
                let mut s = Mat::zeros(4, 4);
                s.columns_mut(0, d).copy_from(&a);
                s.columns_mut(d, 4 - d).copy_from(&b);
                assert!(s.rank(1e-8) == 4);
            }
            assert!(antipodal(&fm, &fp, 1e-6).unwrap().antipodal);
        }
    }
}

#[test]
fn zeta_direction_at_identity_is_diagonal() {
    let zeta = block_step_type(3, &[1, 2]).unwrap();
    let f = FlagChain::standard(3, &[1, 2]).unwrap();
    let v = zeta_direction(&SpdPoint::identity(3), &f, &zeta).unwrap();
    let expect = Mat::from_diagonal(&DVector::from_row_slice(zeta.coords()));
    assert!((v.direction - expect).norm() < 1e-14);
    let bad = TypeVector::from_unnormalized(&[2.0, -0.5, -1.5]).unwrap();
    let coarse = FlagChain::standard(3, &[1, 2]).unwrap();
    assert!(zeta_direction(&SpdPoint::identity(3), &FlagChain::standard(4, &[2]).unwrap(), &bad).is_err());
    assert!(zeta_direction(&SpdPoint::identity(3), &coarse, &bad).is_ok());
}

#[test]
fn zeta_direction_frame_choice_invariance() {
    let mut rng = sampling::rng(5);
    let zeta = block_step_type(4, &[2]).unwrap();
    let x = sampling::spd_point(&mut rng, 4, 2.0);
    for _ in 0..10 {
        let q = sampling::rotation(&mut rng, 4);
        let f1 = FlagChain::from_basis(&q, &[2]).unwrap();
        // Another basis of the same flag: rotate within the blocks.
        let r = sampling::rotation(&mut rng, 2);
        let s = sampling::rotation(&mut rng, 2);
        let mut blk = Mat::zeros(4, 4);
        blk.view_mut((0, 0), (2, 2)).copy_from(&r);
        blk.view_mut((2, 2), (2, 2)).copy_from(&s);
        let f2 = FlagChain::from_basis(&(&q * blk), &[2]).unwrap();
        let a = zeta_direction(&x, &f1, &zeta).unwrap();
        let b = zeta_direction(&x, &f2, &zeta).unwrap();
        assert!((a.in_frame() - b.in_frame()).norm() < 1e-9);
        assert!((a.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn zeta_direction_equivariance_under_rotations() {
    let mut rng = sampling::rng(6);
    let zeta = block_step_type(3, &[1, 2]).unwrap();
    let i = SpdPoint::identity(3);
    for _ in 0..10 {
        let f = FlagChain::from_basis(&sampling::rotation(&mut rng, 3), &[1, 2]).unwrap();
        let k = sampling::rotation_isometry(&mut rng, 3);
        let a = zeta_direction(&i, &f.transform(&k), &zeta).unwrap();
        let b = zeta_direction(&i, &f, &zeta).unwrap();
        let conj = k.matrix() * &b.direction * k.matrix().transpose();
        assert!((a.direction - conj).norm() < 1e-12);
    }
}

#[test]
fn zeta_angle_examples() {
    let zeta = block_step_type(3, &[1, 2]).unwrap();
    let p = FlagChain::standard(3, &[1, 2]).unwrap();
    let m = FlagChain::standard_opposite(3, &[1, 2]).unwrap();
    let i = SpdPoint::identity(3);
    assert!((zeta_angle(&i, &p, &m, &zeta).unwrap() - PI).abs() < 1e-12);
    assert!(zeta_angle(&i, &p, &p, &zeta).unwrap().abs() < 1e-12);
}

/// Upper half-plane model: `z = a + ib ↦ [[(a²+b²)/b, a/b], [a/b, 1/b]]`, with `d = √2 d_H`.
fn h2(a: f64, b: f64) -> SpdPoint {
    SpdPoint::from_matrix(&Mat::from_row_slice(2, 2, &[(a * a + b * b) / b, a / b, a / b, 1.0 / b])).unwrap()
}

fn dh(z: (f64, f64), w: (f64, f64)) -> f64 {
    let num = (z.0 - w.0).powi(2) + (z.1 - w.1).powi(2);
    (1.0 + num / (2.0 * z.1 * w.1)).acosh()
}

#[test]
fn sl2_model_distance() {
    let (z, w) = ((0.3, 1.2), (-1.0, 0.4));
    let d = riem_distance(&h2(z.0, z.1), &h2(w.0, w.1)).unwrap();
    assert!((d - 2f64.sqrt() * dh(z, w)).abs() < 1e-12);
}

#[test]
fn sl2_zeta_angle_is_hyperbolic_angle() {
    let zeta = block_step_type(2, &[1]).unwrap();
    let pts = [((0.0, 1.0), (1.0, 2.0), (-0.5, 0.3)), ((0.2, 0.7), (3.0, 0.5), (0.1, 5.0))];
    for (x, y, z) in pts {
        let (px, py, pz) = (h2(x.0, x.1), h2(y.0, y.1), h2(z.0, z.1));
        let fy = flag_of_segment(&px, &py, &[1], 1e-7).unwrap();
        let ang = zeta_angle_to_point(&px, &fy, &pz, &zeta, 1e-7).unwrap();
        // Hyperbolic law of cosines.
        let (a, b, c) = (dh(x, y), dh(x, z), dh(y, z));
        let cos = (a.cosh() * b.cosh() - c.cosh()) / (a.sinh() * b.sinh());
        assert!((ang - cos.clamp(-1.0, 1.0).acos()).abs() < 1e-9, "{ang}");
    }
}

#[test]
fn zeta_angle_to_point_examples() {
    let zeta = block_step_type(3, &[1, 2]).unwrap();
    let i = SpdPoint::identity(3);
    let p = FlagChain::standard(3, &[1, 2]).unwrap();
    let m = FlagChain::standard_opposite(3, &[1, 2]).unwrap();
    let toward = diag(&[E, 1.0, 1.0 / E]);
    assert!(zeta_angle_to_point(&i, &p, &toward, &zeta, 1e-7).unwrap() < 1e-12);
    let away = diag(&[1.0 / E, 1.0, E]);
    assert!((zeta_angle_to_point(&i, &p, &away, &zeta, 1e-7).unwrap() - PI).abs() < 1e-12);
    assert!((zeta_angle_to_point(&i, &m, &toward, &zeta, 1e-7).unwrap() - PI).abs() < 1e-12);
}

#[test]
fn zeta_angle_increases_along_rays() {
    // Along a ray toward ζ(τ₊) the angle between ζ(τ₋) and ζ(τ₊) does not decrease.
    let mut rng = sampling::rng(21);
    let zeta = block_step_type(3, &[1, 2]).unwrap();
    let p = FlagChain::standard(3, &[1, 2]).unwrap();
    let m = FlagChain::standard_opposite(3, &[1, 2]).unwrap();
    for _ in 0..10 {
        let x = sampling::spd_point(&mut rng, 3, 2.0);
        let dir = zeta_direction(&x, &p, &zeta).unwrap().in_frame();
        let mut prev = -1.0;
        for k in 0..12 {
            let t = 0.5 * k as f64;
            let step = Isometry::from_parts(linalg::sym_exp(&(&dir * (0.5 * t))), linalg::sym_exp(&(&dir * (-0.5 * t))));
            let y = x.frame_compose(&step);
            let a = zeta_angle(&y, &m, &p, &zeta).unwrap();
            assert!(a >= prev - 1e-9, "{a} < {prev}");
            prev = a;
        }
    }
}

#[test]
fn parallel_set_of_standard_pair() {
    let p = FlagChain::standard(3, &[1, 2]).unwrap();
    let m = FlagChain::standard_opposite(3, &[1, 2]).unwrap();
    let ps = parallel_set(&m, &p, 1e-6).unwrap();
    assert_eq!(ps.block_dims, vec![1, 1, 1]);
    assert!((ps.transformer.matrix().abs() - Mat::identity(3, 3)).norm() < 1e-12);
    let ps = parallel_set(
        &FlagChain::standard_opposite(4, &[2]).unwrap(),
        &FlagChain::standard(4, &[2]).unwrap(),
        1e-6,
    )
    .unwrap();
    assert_eq!(ps.block_dims, vec![2, 2]);
    assert!(parallel_set(&p, &p, 1e-6).is_err());
}

#[test]
fn parallel_set_reconstruction() {
    let mut rng = sampling::rng(8);
    for _ in 0..10 {
        let g = sampling::isometry(&mut rng, 4, 1.5);
        for pat in [vec![1, 3], vec![2]] {
            let p = FlagChain::standard(4, &pat).unwrap().transform(&g);
            let m = FlagChain::standard_opposite(4, &pat).unwrap().transform(&g);
            let ps = parallel_set(&m, &p, 1e-6).unwrap();
            // The recovered transformer maps the standard blocks onto the refinement blocks.
            let mut off = 0;
            let t = ps.transformer.matrix();
            for &b in &ps.block_dims {
                let mine = linalg::orthonormalize(&t.columns(off, b).into_owned());
                let theirs = linalg::orthonormalize(&g.matrix().columns(off, b).into_owned());
                assert!(linalg::sin_max_principal_angle(&mine, &theirs) < 1e-8);
                off += b;
            }
            // Its standard flags are the given ones.
            assert!(FlagChain::standard(4, &pat).unwrap().transform(&ps.transformer).distance(&p) < 1e-8);
        }
    }
}

#[test]
fn sl2_parallel_set_is_diagonal_geodesic() {
    let ps = parallel_set(
        &FlagChain::standard_opposite(2, &[1]).unwrap(),
        &FlagChain::standard(2, &[1]).unwrap(),
        1e-6,
    )
    .unwrap();
    let pt = ps.point_from_log(&Mat::from_row_slice(2, 2, &[0.7, 0.4, 0.4, -0.7]));
    let m = pt.matrix();
    assert!(m[(0, 1)].abs() < 1e-14 && (m[(0, 0)] - 0.7f64.exp()).abs() < 1e-12);
}

#[test]
fn projection_of_member_is_itself() {
    let ps = parallel_set(
        &FlagChain::standard_opposite(3, &[1, 2]).unwrap(),
        &FlagChain::standard(3, &[1, 2]).unwrap(),
        1e-6,
    )
    .unwrap();
    let x = diag(&[E, 1.0, 1.0 / E]);
    let pr = project_to_parallel_set(&x, &ps, 1e-10).unwrap();
    assert!(pr.distance < 1e-12);
    assert!(riem_distance(&pr.point, &x).unwrap() < 1e-12);
}

#[test]
fn sl2_distance_to_geodesic_closed_form() {
    let ps = parallel_set(
        &FlagChain::standard_opposite(2, &[1]).unwrap(),
        &FlagChain::standard(2, &[1]).unwrap(),
        1e-6,
    )
    .unwrap();
    // The imaginary axis; sinh d_H = |a| / b.
    for (a, b) in [(0.5, 1.0), (-2.0, 0.3), (7.0, 2.0), (0.01, 4.0)] {
        let pr = project_to_parallel_set(&h2(a, b), &ps, 1e-10).unwrap();
        let expect = 2f64.sqrt() * (a.abs() / b).asinh();
        assert!((pr.distance - expect).abs() < 1e-9, "{} vs {expect}", pr.distance);
        assert!(pr.distance <= pr.initial_distance + 1e-12);
    }
}

#[test]
fn projection_is_stationary_and_improves_truncation() {
    let mut rng = sampling::rng(13);
    for _ in 0..10 {
        let g = sampling::isometry(&mut rng, 3, 1.0);
        let ps = parallel_set(
            &FlagChain::standard_opposite(3, &[1, 2]).unwrap().transform(&g),
            &FlagChain::standard(3, &[1, 2]).unwrap().transform(&g),
            1e-6,
        )
        .unwrap();
        let x = sampling::spd_point(&mut rng, 3, 3.0);
        let pr = project_to_parallel_set(&x, &ps, 1e-10).unwrap();
        assert!(pr.gradient_norm <= 1e-7);
        assert!(pr.distance <= pr.initial_distance + 1e-12);
        // No sampled member of the set is closer.
        for _ in 0..20 {
            let h = sampling::symmetric_direction(&mut rng, 3, 0.3);
            let cand = ps.point_from_block_frame(
                &ps.transformer.inverse().compose(pr.point.frame()).compose(&Isometry::from_parts(
                    linalg::sym_exp(&(ps.block_part(&h) * 0.5)),
                    linalg::sym_exp(&(ps.block_part(&h) * -0.5)),
                )),
            );
            assert!(riem_distance(&x, &cand).unwrap() >= pr.distance - 1e-9);
        }
    }
}

#[test]
fn angle_versus_distance_to_parallel_set() {
    let zeta = block_step_type(3, &[1, 2]).unwrap();
    let p = FlagChain::standard(3, &[1, 2]).unwrap();
    let m = FlagChain::standard_opposite(3, &[1, 2]).unwrap();
    let ps = parallel_set(&m, &p, 1e-6).unwrap();
    let mut rng = sampling::rng(17);
    for _ in 0..5 {
        let on = ps.point_from_log(&sampling::symmetric_direction(&mut rng, 3, 1.0));
        assert!((zeta_angle(&on, &m, &p, &zeta).unwrap() - PI).abs() < 1e-6);
        // Move off the set along a fixed direction orthogonal to it.
        let mut w = sampling::symmetric_direction(&mut rng, 3, 1.0);
        w = &w - ps.block_part(&w);
        w /= w.norm();
        let mut prev = f64::INFINITY;
        for k in (1..=8).rev() {
            let t = 0.25 * k as f64;
            let step = Isometry::from_parts(linalg::sym_exp(&(&w * (0.5 * t))), linalg::sym_exp(&(&w * (-0.5 * t))));
            let x = on.frame_compose(&step);
            let defect = PI - zeta_angle(&x, &m, &p, &zeta).unwrap();
            assert!(defect > 0.0 && defect <= prev + 1e-12);
            prev = defect;
        }
    }
}

#[test]
fn depth_into_cone_approaches_parallel_set() {
    let zeta = block_step_type(3, &[1, 2]).unwrap();
    let p = FlagChain::standard(3, &[1, 2]).unwrap();
    let m = FlagChain::standard_opposite(3, &[1, 2]).unwrap();
    let ps = parallel_set(&m, &p, 1e-6).unwrap();
    let mut rng = sampling::rng(19);
    for _ in 0..5 {
        let x = sampling::spd_point(&mut rng, 3, 2.0);
        let dir = zeta_direction(&x, &p, &zeta).unwrap().in_frame();
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let t = k as f64;
            let step = Isometry::from_parts(linalg::sym_exp(&(&dir * (0.5 * t))), linalg::sym_exp(&(&dir * (-0.5 * t))));
            let y = x.frame_compose(&step);
            let d = project_to_parallel_set(&y, &ps, 1e-10).unwrap().distance;
            assert!(d <= prev + 1e-9);
            prev = d;
        }
    }
}

#[test]
fn attracting_flag_examples() {
    let g = Isometry::new(Mat::from_diagonal(&DVector::from_row_slice(&[4.0, 1.0, 0.25]))).unwrap();
    let f = attracting_flag(&g, &[1, 2], 1e-7).unwrap();
    assert!(f.distance(&FlagChain::standard(3, &[1, 2]).unwrap()) < 1e-12);
    let r = attracting_flag(&g.inverse(), &[1, 2], 1e-7).unwrap();
    assert!(r.distance(&FlagChain::standard_opposite(3, &[1, 2]).unwrap()) < 1e-12);
    let tie = Isometry::new(Mat::from_diagonal(&DVector::from_row_slice(&[2.0, 2.0, 0.25]))).unwrap();
    assert!(matches!(
        attracting_flag(&tie, &[1, 2], 1e-7),
        Err(morse_core::MorseError::ModulusTie { index: 1, .. })
    ));
    let tie4 = Isometry::new(Mat::from_diagonal(&DVector::from_row_slice(&[2.0, 2.0, 0.5, 0.5]))).unwrap();
    assert!(attracting_flag(&tie4, &[2], 1e-7).is_ok());
}

#[test]
fn attracting_flags_antipodal_and_equivariant() {
    let mut rng = sampling::rng(23);
    let g0 = Isometry::diagonal_exp(&[1.5, 0.2, -1.7]);
    for _ in 0..10 {
        let h = sampling::isometry(&mut rng, 3, 1.0);
        let g = g0.conjugate_by(&h);
        let a = attracting_flag(&g, &[1, 2], 1e-7).unwrap();
        let r = attracting_flag(&g.inverse(), &[1, 2], 1e-7).unwrap();
        assert!(antipodal(&r, &a, 1e-6).unwrap().antipodal);
        let expect = FlagChain::standard(3, &[1, 2]).unwrap().transform(&h);
        assert!(a.distance(&expect) < 1e-8);
        // Further conjugation.
        let k = sampling::isometry(&mut rng, 3, 1.0);
        let ak = attracting_flag(&g.conjugate_by(&k), &[1, 2], 1e-7).unwrap();
        assert!(ak.distance(&a.transform(&k)) < 1e-8);
    }
}

#[test]
fn attracting_flag_with_rotation_block() {
    // A complex pair of moduli e^{0.5} sits in the middle: pattern (1,3) of SL(4).
    let c = 0.8f64.cos();
    let s = 0.8f64.sin();
    let m = Mat::from_row_slice(4, 4, &[
        3.0, 0.0, 0.0, 0.0,
        0.0, c, -s, 0.0,
        0.0, s, c, 0.0,
        0.0, 0.0, 0.0, 1.0 / 3.0,
    ]);
    let g = Isometry::new(m).unwrap();
    let f = attracting_flag(&g, &[1, 3], 1e-7).unwrap();
    assert!(f.distance(&FlagChain::standard(4, &[1, 3]).unwrap()) < 1e-12);
    assert!(attracting_flag(&g, &[1, 2, 3], 1e-7).is_err());
}

#[test]
fn cone_membership_examples() {
    let th = ThetaSpec::uniform(3, &[1, 2], 0.2).unwrap();
    let f = FlagChain::standard(3, &[1, 2]).unwrap();
    let i = SpdPoint::identity(3);
    let c = cone_membership(&i, &f, &diag(&[E * E, 1.0, 1.0 / (E * E)]), &th, 1e-7, 1e-6).unwrap();
    assert!(c.verdict && c.flag_mismatch < 1e-12);
    let c = cone_membership(&i, &f, &diag(&[1.0 / (E * E), 1.0, E * E]), &th, 1e-7, 1e-6).unwrap();
    assert!(!c.verdict && (c.flag_mismatch - PI / 2.0).abs() < 1e-9);
    let c = cone_membership(&i, &f, &i, &th, 1e-7, 1e-6).unwrap();
    assert!(!c.verdict && c.reason.is_some());
    let c = cone_membership(&i, &f, &diag(&[E, E, 1.0 / (E * E)]), &th, 1e-7, 1e-6).unwrap();
    assert!(!c.verdict && c.reason.is_some());
}

#[test]
fn cones_are_convex() {
    // Pattern (2) of SL(4): members are g·k·exp(H)·kᵀ·gᵀ with k in O(2)×O(2) and H
    // diagonal with Θ-regular type, so midpoints of members leave any common flat.
    let mut rng = sampling::rng(29);
    let bound = 0.3;
    let th = ThetaSpec::uniform(4, &[2], bound).unwrap();
    let g = sampling::isometry(&mut rng, 4, 1.0);
    let apex = SpdPoint::identity(4).transform(&g);
    let f = FlagChain::standard(4, &[2]).unwrap().transform(&g);
    let mut members = Vec::new();
    while members.len() < 30 {
        let h: Vec<f64> = (0..4).map(|i| if i < 2 { 2.0 } else { -2.0 } + rand::Rng::random::<f64>(&mut rng) - 0.5).collect();
        let mut k = Mat::zeros(4, 4);
        k.view_mut((0, 0), (2, 2)).copy_from(&sampling::rotation(&mut rng, 2));
        k.view_mut((2, 2), (2, 2)).copy_from(&sampling::rotation(&mut rng, 2));
        let k = Isometry::from_parts(k.clone(), k.transpose());
        let step = k.compose(&Isometry::diagonal_exp(&h)).compose(&k.inverse());
        let z = SpdPoint::from_frame(apex.frame().compose(&step));
        let d = cone_membership(&apex, &f, &z, &th, 1e-7, 1e-6).unwrap();
        assert!(d.flag_mismatch < 1e-8);
        if d.verdict {
            members.push(z);
        }
    }
    for pair in members.windows(2) {
        let mid = midpoint(&pair[0], &pair[1]).unwrap();
        let d = cone_membership(&apex, &f, &mid, &th, 1e-7, 1e-6).unwrap();
        assert!(d.verdict, "{d:?}");
    }
}

#[test]
fn diamond_contains_geodesic() {
    let mut rng = sampling::rng(31);
    let th = ThetaSpec::uniform(3, &[1, 2], 0.1).unwrap();
    let theta_bar = block_step_type(3, &[1, 2]).unwrap();
    for _ in 0..10 {
        let x = sampling::spd_point(&mut rng, 3, 2.0);
        let y = SpdPoint::from_frame(x.frame().compose(&Isometry::diagonal_exp(&[2.0, 0.1, -2.1]).conjugate_by(&sampling::rotation_isometry(&mut rng, 3))));
        for t in [0.1, 0.5, 0.9] {
            let z = geodesic_point(&x, &y, t).unwrap();
            let d = diamond_defect(&x, &y, &z, &th, &theta_bar, 1e-9).unwrap();
            assert!(d.finsler_gap.abs() < 1e-9 && d.member);
        }
        let d = diamond_defect(&x, &y, &x, &th, &theta_bar, 1e-9).unwrap();
        assert!(d.finsler_gap.abs() < 1e-9 && d.margin_xz.is_none() && d.margin_zy.is_some());
    }
}

/// Brute-force Finsler distance in a flat: max over all permutations of θ̄.
fn finsler_flat(theta_bar: &[f64], w: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for p in perms {
        best = best.max((0..3).map(|i| theta_bar[p[i]] * w[i]).sum());
    }
    best
}

#[test]
fn finsler_distance_matches_permutation_maximum() {
    let mut rng = sampling::rng(37);
    let theta_bar = TypeVector::from_unnormalized(&[1.0, 0.2, -1.2]).unwrap();
    for _ in 0..20 {
        let w: Vec<f64> = (0..3).map(|_| rand::Rng::random::<f64>(&mut rng) * 4.0 - 2.0).collect();
        let mean = w.iter().sum::<f64>() / 3.0;
        let w: Vec<f64> = w.iter().map(|v| v - mean).collect();
        let k = sampling::rotation_isometry(&mut rng, 3);
        let y = SpdPoint::diagonal_exp(&w).transform(&k);
        let d = finsler_distance(&SpdPoint::identity(3), &y, &theta_bar).unwrap();
        assert!((d - finsler_flat(theta_bar.coords(), &w)).abs() < 1e-12);
    }
}

#[test]
fn diamond_membership_in_a_flat_matches_polyhedron() {
    let theta_bar = block_step_type(3, &[1, 2]).unwrap();
    let bound = 0.15;
    let th = ThetaSpec::uniform(3, &[1, 2], bound).unwrap();
    let v = [3.0, 0.5, -3.5];
    let (x, y) = (SpdPoint::identity(3), SpdPoint::diagonal_exp(&v));
    let (mut agree, mut total) = (0, 0);
    for i in 0..50 {
        for j in 0..50 {
            let a = -4.0 + 8.0 * i as f64 / 49.0;
            let b = -4.0 + 8.0 * j as f64 / 49.0;
            let w = [a, b, -a - b];
            // Oracle: w and v − w both lie in the Θ-part of the closed positive chamber.
            let inside = |u: &[f64; 3]| {
                let nrm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
                let r = [u[0] - u[1], u[1] - u[2]];
                (r.iter().map(|v| v - bound * nrm).fold(f64::INFINITY, f64::min), nrm)
            };
            let (m1, n1) = inside(&w);
            let (m2, n2) = inside(&[v[0] - w[0], v[1] - w[1], v[2] - w[2]]);
            if (m1.abs() < 1e-6 && n1 > 1e-6) || (m2.abs() < 1e-6 && n2 > 1e-6) {
                continue;
            }
            let expect = (n1 < 1e-9 || m1 >= 0.0) && (n2 < 1e-9 || m2 >= 0.0);
            // The Finsler gap from the brute-force permutation formula.
            let gap = finsler_flat(theta_bar.coords(), &w)
                + finsler_flat(theta_bar.coords(), &[v[0] - w[0], v[1] - w[1], v[2] - w[2]])
                - finsler_flat(theta_bar.coords(), &v);
            let d = diamond_defect(&x, &y, &SpdPoint::diagonal_exp(&w), &th, &theta_bar, 1e-9).unwrap();
            assert!((d.finsler_gap - gap).abs() < 1e-9);
            total += 1;
            if d.member == expect {
                agree += 1;
            }
        }
    }
    assert_eq!(agree, total);
    assert!(total > 2000);
}

#[test]
fn diamond_distance_bound_in_a_flat() {
    let theta_bar = block_step_type(3, &[1, 2]).unwrap();
    let th = ThetaSpec::uniform(3, &[1, 2], 0.15).unwrap();
    let v = [3.0, 0.5, -3.5];
    let (x, y) = (SpdPoint::identity(3), SpdPoint::diagonal_exp(&v));
    // Inside: bound 0.
    let z = SpdPoint::diagonal_exp(&[1.5, 0.2, -1.7]);
    let b = diamond_distance_bound(&transporter(&x, &z), &transporter(&z, &y), &th, &theta_bar, 1e-9);
    assert!(b.found && b.bound < 1e-12);
    // Off the flat: the bound is at least the distance to the flat.
    let mut rng = sampling::rng(41);
    for _ in 0..10 {
        let z = sampling::point_at_distance(&mut rng, &SpdPoint::diagonal_exp(&[1.5, 0.2, -1.7]), 0.5);
        let b = diamond_distance_bound(&transporter(&x, &z), &transporter(&z, &y), &th, &theta_bar, 1e-9);
        assert!(b.found, "{b:?}");
        let ps = parallel_set(
            &FlagChain::standard_opposite(3, &[1, 2]).unwrap(),
            &FlagChain::standard(3, &[1, 2]).unwrap(),
            1e-6,
        )
        .unwrap();
        let to_flat = project_to_parallel_set(&z, &ps, 1e-10).unwrap().distance;
        assert!(b.bound >= to_flat - 1e-9, "{} vs {}", b.bound, to_flat);
        assert!(b.bound <= 3.0 * to_flat + 1e-6, "{} vs {}", b.bound, to_flat);
    }
}
