//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any
//! criterion fails. Pass criterion numbers as arguments to run a subset.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use morse_core::calibration::Calibration;
use morse_core::error::MorseError;
use morse_core::flags::*;
use morse_core::linalg::Mat;
use morse_core::morsecheck::*;
use morse_core::paths::DiscretePath;
use morse_core::recognizer::*;
use morse_core::sampling::{self, FlatMarch};
use morse_core::schottky::*;
use morse_core::straightness::*;
use morse_core::symspace::*;
use morse_core::words::count_reduced;
use nalgebra::Complex;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {:.1} s, limit {} s", t.as_secs_f64(), limit.as_secs()))
}

fn ok<T, E: std::fmt::Debug>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| format!("{e:?}"))
}

fn sl2() -> ModelConfig {
    ModelConfig::new(2, vec![1]).unwrap()
}

fn sl3() -> ModelConfig {
    ModelConfig::new(3, vec![1, 2]).unwrap()
}

fn stage(i: usize) -> ThetaSpec {
    ThetaSpec::stage(3, &[1, 2], i).unwrap()
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("geometry kernel", kernel),
        ("Finsler oracle equivalence", finsler_oracle),
        ("diamond characterization", diamonds),
        ("rank-one cross-check", rank_one),
        ("straightness Morse lemma", straightness_lemma),
        ("local-to-global consistency", local_to_global),
        ("Schottky end-to-end", schottky_end_to_end),
        ("recognizer semidecision", recognizer),
        ("structural stability", structural_stability),
        ("perturbation lemma", perturbation_lemma),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut run = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let k = i + 1;
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        run += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {k:>2} {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {k:>2} {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} of {run} criteria passed", run - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Cartan symmetry, isometry invariance, triangle inequality and geodesic additivity.
fn kernel() -> Outcome {
    let start = Instant::now();
    let mut rng = sampling::rng(101);
    let (mut sym, mut inv, mut tri, mut add): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for trial in 0..1000 {
        let n = 2 + trial % 3;
        let x = sampling::spd_point(&mut rng, n, 3.0);
        let y = sampling::spd_point(&mut rng, n, 3.0);
        let z = sampling::spd_point(&mut rng, n, 3.0);
        let g = sampling::isometry(&mut rng, n, 1.5);

        let vxy = ok(cartan_vector(&x, &y))?;
        let vyx = ok(cartan_vector(&y, &x))?;
        for (a, b) in vyx.coords().iter().zip(opposition(&vxy).coords()) {
            sym = sym.max((a - b).abs());
        }
        let moved = ok(cartan_vector(&x.transform(&g), &y.transform(&g)))?;
        for (a, b) in moved.coords().iter().zip(vxy.coords()) {
            inv = inv.max((a - b).abs());
        }

        let (dxy, dyz, dxz) = (vxy.norm(), ok(riem_distance(&y, &z))?, ok(riem_distance(&x, &z))?);
        tri = tri.max(dxz - dxy - dyz);

        let t = rng.random::<f64>();
        let m = ok(geodesic_point(&x, &y, t))?;
        let (dxm, dmy) = (ok(riem_distance(&x, &m))?, ok(riem_distance(&m, &y))?);
        add = add.max((dxm + dmy - dxy).abs()).max((dxm - t * dxy).abs());
    }
    ensure(sym <= 1e-8, || format!("opposition symmetry error {sym:e}"))?;
    ensure(inv <= 1e-8, || format!("isometry invariance error {inv:e}"))?;
    ensure(tri <= 1e-8, || format!("triangle violation {tri:e}"))?;
    ensure(add <= 1e-9, || format!("geodesic additivity error {add:e}"))?;
    within(start, Duration::from_secs(10))?;
    Ok(format!("1000 samples; symmetry {sym:.1e}, invariance {inv:.1e}, triangle {tri:.1e}, additivity {add:.1e}"))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..n {
            let mut q = p.clone();
            q.insert(slot, n - 1);
            out.push(q);
        }
    }
    out
}

/// Maximum of `⟨θ̄, σw⟩` over all `n!` permutations.
fn brute_finsler(theta_bar: &[f64], w: &[f64]) -> f64 {
    permutations(w.len())
        .iter()
        .map(|p| (0..w.len()).map(|i| theta_bar[p[i]] * w[i]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn trace_zero(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let mean = w.iter().sum::<f64>() / n as f64;
    w.iter().map(|v| v - mean).collect()
}

/// Sorted-pairing Finsler distance against the brute-force Weyl-orbit maximum.
fn finsler_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = sampling::rng(202);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let n = 2 + trial % 3;
        let mut tb = trace_zero(&mut rng, n, 1.0);
        tb.sort_by(|a, b| b.total_cmp(a));
        let theta_bar = ok(TypeVector::from_unnormalized(&tb))?;
        // y = g k diag(e^w) kᵀ gᵀ and x = g gᵀ, so the Cartan vector of xy is w up to order.
        let w = trace_zero(&mut rng, n, 3.0);
        let k = sampling::rotation_isometry(&mut rng, n);
        let g = sampling::isometry(&mut rng, n, 1.0);
        let x = SpdPoint::identity(n).transform(&g);
        let y = SpdPoint::diagonal_exp(&w).transform(&k).transform(&g);
        let d = ok(finsler_distance(&x, &y, &theta_bar))?;
        worst = worst.max((d - brute_finsler(theta_bar.coords(), &w)).abs());
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!("1000 pairs in SL(2..4); max deviation {worst:.1e}"))
}

/// Geodesic samples have zero Finsler gap, and flat diamond verdicts match the
/// Weyl-polyhedron oracle on a grid.
fn diamonds() -> Outcome {
    let mut rng = sampling::rng(303);
    let mut worst_gap: f64 = 0.0;
    for trial in 0..200 {
        let n = 3 + trial % 2;
        let pattern: Vec<usize> = (1..n).collect();
        let th = ok(ThetaSpec::uniform(n, &pattern, 0.05))?;
        let theta_bar = ok(block_step_type(n, &pattern))?;
        let x = sampling::spd_point(&mut rng, n, 2.0);
        let r = 1.0 + 5.0 * rng.random::<f64>();
        let y = sampling::point_at_distance(&mut rng, &x, r);
        let z = ok(geodesic_point(&x, &y, rng.random::<f64>()))?;
        let d = ok(diamond_defect(&x, &y, &z, &th, &theta_bar, 1e-9))?;
        worst_gap = worst_gap.max(d.finsler_gap.abs());
    }
    ensure(worst_gap <= 1e-9, || format!("geodesic Finsler gap {worst_gap:e}"))?;

    let theta_bar = ok(block_step_type(3, &[1, 2]))?;
    let bound = 0.15;
    let tol = 1e-7;
    let th = ok(ThetaSpec::uniform(3, &[1, 2], bound))?;
    let v = [3.0, 0.5, -3.5];
    let (x, y) = (SpdPoint::identity(3), SpdPoint::diagonal_exp(&v));
    // Θ-margin of a flat vector, or None for the zero vector.
    let margin = |u: [f64; 3]| {
        let nrm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        (nrm > tol).then(|| (u[0] - u[1]).min(u[1] - u[2]) - bound * nrm)
    };
    let (mut checked, mut skipped, mut disagree) = (0, 0, 0);
    for i in 0..50 {
        for j in 0..50 {
            let a = -4.0 + 8.0 * i as f64 / 49.0;
            let b = -4.0 + 8.0 * j as f64 / 49.0;
            let w = [a, b, -a - b];
            let (m1, m2) = (margin(w), margin([v[0] - w[0], v[1] - w[1], v[2] - w[2]]));
            if [m1, m2].iter().flatten().any(|m| m.abs() < tol) {
                skipped += 1;
                continue;
            }
            let expect = m1.is_none_or(|m| m > 0.0) && m2.is_none_or(|m| m > 0.0);
            let d = ok(diamond_defect(&x, &y, &SpdPoint::diagonal_exp(&w), &th, &theta_bar, 1e-9))?;
            checked += 1;
            if d.member != expect {
                disagree += 1;
            }
        }
    }
    ensure(disagree == 0, || format!("{disagree} of {checked} grid verdicts disagree"))?;
    Ok(format!("geodesic gap {worst_gap:.1e}; {checked} grid points agree ({skipped} on the boundary skipped)"))
}

/// Upper half-plane point `a + ib` as `[[(a²+b²)/b, a/b], [a/b, 1/b]]`.
fn h2(a: f64, b: f64) -> SpdPoint {
    SpdPoint::from_matrix(&Mat::from_row_slice(2, 2, &[(a * a + b * b) / b, a / b, a / b, 1.0 / b])).unwrap()
}

/// Hyperbolic angle at `x` between the geodesics to `y` and `z`: move `x` to `i`, then
/// to the center of the disk, where geodesics through it are diameters.
fn hyperbolic_angle(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> f64 {
    let i = Complex::new(0.0, 1.0);
    let to_disk = |p: (f64, f64)| {
        let u = Complex::new((p.0 - x.0) / x.1, p.1 / x.1);
        (u - i) / (u + i)
    };
    let d = (to_disk(y).arg() - to_disk(z).arg()).abs();
    d.min(2.0 * PI - d)
}

/// ζ-angles and parallel-set projections in SL(2) against hyperbolic closed forms.
fn rank_one() -> Outcome {
    let mut rng = sampling::rng(404);
    let zeta = ok(block_step_type(2, &[1]))?;
    let sample = |rng: &mut sampling::SeededRng| (4.0 * rng.random::<f64>() - 2.0, 0.3 + 2.7 * rng.random::<f64>());
    let mut worst_angle: f64 = 0.0;
    let mut configs = 0;
    while configs < 500 {
        let (x, y, z) = (sample(&mut rng), sample(&mut rng), sample(&mut rng));
        let (px, py, pz) = (h2(x.0, x.1), h2(y.0, y.1), h2(z.0, z.1));
        if ok(riem_distance(&px, &py))? < 1e-3 || ok(riem_distance(&px, &pz))? < 1e-3 {
            continue;
        }
        configs += 1;
        let fy = ok(flag_of_segment(&px, &py, &[1], 1e-9))?;
        let ang = ok(zeta_angle_to_point(&px, &fy, &pz, &zeta, 1e-9))?;
        worst_angle = worst_angle.max((ang - hyperbolic_angle(x, y, z)).abs());
    }
    ensure(worst_angle <= 1e-8, || format!("angle deviation {worst_angle:e}"))?;

    // Distance to a moved copy of the imaginary axis: √2 asinh(|a|/b).
    let mut worst_dist: f64 = 0.0;
    for _ in 0..500 {
        let g = sampling::isometry(&mut rng, 2, 1.5);
        let minus = ok(FlagChain::standard_opposite(2, &[1]))?.transform(&g);
        let plus = ok(FlagChain::standard(2, &[1]))?.transform(&g);
        let ps = ok(parallel_set(&minus, &plus, 1e-6))?;
        let (a, b) = sample(&mut rng);
        let pr = ok(project_to_parallel_set(&h2(a, b).transform(&g), &ps, 1e-12))?;
        worst_dist = worst_dist.max((pr.distance - 2f64.sqrt() * (a.abs() / b).asinh()).abs());
    }
    ensure(worst_dist <= 1e-6, || format!("projection deviation {worst_dist:e}"))?;
    Ok(format!("500 angles within {worst_angle:.1e}; 500 projections within {worst_dist:.1e}"))
}

/// Calibrated straight spaced sequences in perturbed parallel sets end near the parallel
/// set of their estimated end flags, with nested cones and linear spacing.
fn straightness_lemma() -> Outcome {
    let start = Instant::now();
    let model = sl3();
    let calib = Calibration::default_table();
    let (theta, theta_prime) = (stage(2), stage(3));
    let entry = ok(calib.straightness(&theta, &theta_prime, 1.0))?.clone();
    let params = StraightParams {
        theta: theta.clone(),
        epsilon: entry.epsilon,
        spacing: entry.spacing,
        zeta: model.zeta.clone(),
        eigengap: model.tol.eigengap,
    };
    let tol = ConclusionTolerances {
        eigengap: model.tol.eigengap,
        flag: 1e-6,
        projection: 1e-10,
    };
    let mut rng = sampling::rng(505);
    let (mut accepted, mut drawn) = (0, 0);
    let (mut max_dist, mut min_c, mut min_cone): (f64, f64, f64) = (0.0, f64::INFINITY, f64::INFINITY);
    while accepted < 200 {
        drawn += 1;
        ensure(drawn <= 20_000, || format!("only {accepted} straight sequences in {drawn} draws"))?;
        let direction = sampling::direction_in(&mut rng, &theta, 10_000).ok_or("Θ has no directions")?;
        let lo = entry.spacing * rng.random_range(1.0..2.0);
        let march = FlatMarch {
            direction,
            step_range: (lo, lo * rng.random_range(1.0..1.5)),
            spread: 0.2 * rng.random::<f64>(),
            jitter: 0.5 * entry.delta * rng.random::<f64>(),
            turn: 0.3 * rng.random::<f64>(),
            len: rng.random_range(6..=12),
        };
        let seq = sampling::flat_march(&mut rng, &march);
        if !ok(is_straight_spaced(&seq, &params))?.straight {
            continue;
        }
        accepted += 1;
        let r = ok(morse_lemma_conclusion(&seq, &theta_prime, entry.delta, entry.spacing, tol))?;
        ensure(r.max_distance <= entry.delta, || format!("sequence {accepted} ends {} from its parallel set", r.max_distance))?;
        ensure(r.witness.is_none(), || format!("sequence {accepted}: cones do not nest at {:?}", r.witness))?;
        ensure(r.spacing_constant > 0.0, || format!("sequence {accepted}: spacing constant {}", r.spacing_constant))?;
        max_dist = max_dist.max(r.max_distance);
        min_c = min_c.min(r.spacing_constant);
        min_cone = min_cone.min(r.worst_cone_margin);
    }
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "200 sequences (of {drawn} drawn) at eps {:.3}, l {:.3}, delta {}; max distance {max_dist:.3}, min cone margin {min_cone:.3}, min c {min_c:.3}",
        entry.epsilon, entry.spacing, entry.delta
    ))
}

/// A path with a datum at which the direct Morse check certifies it.
struct Fixture {
    name: String,
    path: DiscretePath,
    datum: MorseDatum,
    theta_prime: ThetaSpec,
}

/// Regular geodesics, Schottky word paths and densified flat marches in SL(3), kept
/// when certified.
fn fixtures(model: &ModelConfig, calib: &Calibration) -> Result<Vec<Fixture>, String> {
    let mut candidates = Vec::new();
    let mut rng = sampling::rng(606);
    for k in 0..4 {
        let dir = sampling::direction_in(&mut rng, &stage(2), 10_000).ok_or("Θ_2 has no directions")?;
        let half: Vec<f64> = dir.iter().map(|c| 0.5 * c).collect();
        let q = sampling::rotation_isometry(&mut rng, 3);
        let step = Isometry::diagonal_exp(&half).conjugate_by(&q);
        let base = sampling::spd_point(&mut rng, 3, 2.0);
        let path = ok(DiscretePath::from_steps(0, base, vec![step; 30]))?;
        candidates.push((format!("geodesic {k}"), path, ok(MorseDatum::new(stage(2), 1.0, 1.0, 0.5))?, stage(3)));
    }

    let alpha = Isometry::diagonal_exp(&[4f64.ln(), 0.0, -4f64.ln()]);
    let beta = alpha.conjugate_by(&sampling::rotation_isometry(&mut sampling::rng(2), 3));
    let x = SpdPoint::identity(3);
    let cfg = SchottkyConfig {
        word_length: 3,
        ..SchottkyConfig::default()
    };
    let SchottkyOutcome::Certificate(cert, _) = ok(certify_schottky(&alpha, &beta, &x, &cfg, model, calib))? else {
        return Err("Schottky search exhausted".into());
    };
    let gens = ok(generic_pair(&alpha, &beta, model))?.generators(cert.m, cert.n);
    for word in ["abab" , "aBaBaB", "abABab", "aaBBaa", "AbAbAB"] {
        let w = ok(morse_core::words::parse_word(word, 2))?;
        let path = ok(word_path(&gens, &w, &x))?;
        let l = ok(fit_multiplicative(&path, 0.0))? * (1.0 + 1e-6);
        candidates.push((format!("word {word}"), path, ok(MorseDatum::new(stage(3), 1.0, l, 0.0))?, stage(4)));
    }

    for k in 0..4 {
        let direction = sampling::direction_in(&mut rng, &stage(2), 10_000).ok_or("Θ_2 has no directions")?;
        let march = FlatMarch {
            direction,
            step_range: (2.0, 4.0),
            spread: 0.05,
            jitter: 0.2,
            turn: 0.1,
            len: 6,
        };
        let seq = sampling::flat_march(&mut rng, &march);
        let path = ok(DiscretePath::densify(0, &seq, 1.0))?;
        let l = ok(fit_multiplicative(&path, 1.0))? * (1.0 + 1e-6);
        candidates.push((format!("march {k}"), path, ok(MorseDatum::new(stage(2), 1.0, l, 1.0))?, stage(3)));
    }

    let mut out = Vec::new();
    for (name, path, datum, theta_prime) in candidates {
        if ok(morse_check(&path, &datum, &theta_prime, model, calib))?.certified {
            out.push(Fixture { name, path, datum, theta_prime });
        }
    }
    Ok(out)
}

/// Promoted data of certified fixtures pass the direct global check.
fn local_to_global() -> Outcome {
    let model = sl3();
    let calib = Calibration::default_table();
    let fixtures = fixtures(&model, &calib)?;
    let (mut promoted, mut local_fail, mut contradictions) = (0, 0, Vec::new());
    for f in &fixtures {
        match certify_local_to_global(&f.path, &f.datum, &f.theta_prime, &model, &calib) {
            Ok(c) if c.certified => {
                let entry = ok(calib.local_to_global(&f.datum.theta, &f.theta_prime, f.datum.key()))?;
                let direct = ok(morse_check(&f.path, &c.datum, &entry.theta_check, &model, &calib))?;
                if direct.certified {
                    promoted += 1;
                } else {
                    contradictions.push(f.name.clone());
                }
            }
            Ok(_) => local_fail += 1,
            Err(MorseError::CalibrationDefect(_)) => contradictions.push(f.name.clone()),
            Err(e) => return Err(format!("{}: {e}", f.name)),
        }
    }
    ensure(contradictions.is_empty(), || format!("contradictions on {contradictions:?}"))?;
    ensure(promoted > 0, || "no fixture was promoted".into())?;
    Ok(format!("{} certified fixtures, {promoted} promoted and confirmed, {local_fail} failed a window, 0 contradictions", fixtures.len()))
}

/// Smallest `k` from which on the Dirichlet half-planes of `α^{±k}, β^{±k}` about `i`
/// are pairwise disjoint, from Möbius actions on the upper half-plane.
fn ping_pong_threshold(alpha: &Mat, beta: &Mat, max: usize) -> Option<usize> {
    let arc = |g: &Mat| {
        let i = Complex::new(0.0, 1.0);
        let z = (i * g[(0, 0)] + g[(0, 1)]) / (i * g[(1, 0)] + g[(1, 1)]);
        let w = (z - i) / (z + i);
        let dist = 2.0 * w.norm().atanh();
        (w.arg(), (dist / 2.0).tanh().acos())
    };
    let inv = |g: &Mat| Mat::from_row_slice(2, 2, &[g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]]);
    let disjoint = |k: u32| {
        let (a, b) = (alpha.pow(k), beta.pow(k));
        let arcs: Vec<(f64, f64)> = [inv(&a), a, inv(&b), b].iter().map(arc).collect();
        (0..4).all(|p| {
            (p + 1..4).all(|q| {
                let d = (arcs[p].0 - arcs[q].0).abs() % (2.0 * PI);
                d.min(2.0 * PI - d) > arcs[p].1 + arcs[q].1
            })
        })
    };
    (1..=max).find(|&k| (k..=max).all(|j| disjoint(j as u32)))
}

fn schottky_pair(seed: u64) -> (Isometry, Isometry) {
    let alpha = Isometry::diagonal_exp(&[4f64.ln(), 0.0, -4f64.ln()]);
    let beta = alpha.conjugate_by(&sampling::rotation_isometry(&mut sampling::rng(seed), 3));
    (alpha, beta)
}

/// Power search and verification of every reduced word of length 8 in SL(3), and the
/// SL(2) comparison with ping-pong.
fn schottky_end_to_end() -> Outcome {
    let start = Instant::now();
    let model = sl3();
    let calib = Calibration::default_table();
    let (alpha, beta) = schottky_pair(2);
    let x = SpdPoint::identity(3);
    let cfg = SchottkyConfig::default();
    ensure(cfg.budget == 64 && cfg.word_length == 8, || format!("unexpected defaults {cfg:?}"))?;
    let SchottkyOutcome::Certificate(cert, _) = ok(certify_schottky(&alpha, &beta, &x, &cfg, &model, &calib))? else {
        return Err("no powers within budget 64".into());
    };
    let w = &cert.words;
    let expected = count_reduced(2, 8);
    ensure(w.words as u128 == expected, || format!("{} words, expected {expected}", w.words))?;
    ensure(cert.certified && w.passes, || format!("word verification failed at {:?}: {:?}", w.failing_word, w.failure))?;
    ensure(w.min_slope > 0.0, || format!("lower-bound slope {}", w.min_slope))?;

    let model2 = sl2();
    let x2 = SpdPoint::identity(2);
    let qp = ok(stage_params(&model2, &calib, 3))?;
    let mut pairs = Vec::new();
    for (t, angle) in [(0.6, 0.5), (1.0, 0.7), (0.4, 0.35), (0.8, 0.25)] {
        let a = Isometry::diagonal_exp(&[t, -t]);
        let (c, s) = (f64::cos(angle), f64::sin(angle));
        let b = a.conjugate_by(&ok(Isometry::new(Mat::from_row_slice(2, 2, &[c, -s, s, c])))?);
        let pp = ping_pong_threshold(a.matrix(), b.matrix(), 32).ok_or("no ping-pong threshold below 32")?;
        let pair = ok(generic_pair(&a, &b, &model2))?;
        let (k, _) = ok(search_powers(&pair, &x2, &qp, 64, PowerMode::Symmetric))?.found.ok_or("SL(2) search exhausted")?;
        ensure(k <= 4 * pp && pp <= 4 * k, || format!("t {t}, angle {angle}: found {k}, ping-pong {pp}"))?;
        pairs.push(format!("{k}/{pp}"));
    }
    within(start, Duration::from_secs(20 * 60))?;
    Ok(format!(
        "SL(3) powers ({}, {}), {} words pass, min slope {:.3}; SL(2) found/ping-pong {}",
        cert.m,
        cert.n,
        w.words,
        w.min_slope,
        pairs.join(", ")
    ))
}

/// `ρ(a) = α^m, ρ(b) = β^n` at powers certified by the Schottky pipeline.
fn schottky_rep(seed: u64, model: &ModelConfig, calib: &Calibration) -> Result<Representation, String> {
    let (alpha, beta) = schottky_pair(seed);
    let x = SpdPoint::identity(3);
    let cfg = SchottkyConfig {
        word_length: 3,
        ..SchottkyConfig::default()
    };
    let SchottkyOutcome::Certificate(c, _) = ok(certify_schottky(&alpha, &beta, &x, &cfg, model, calib))? else {
        return Err("Schottky search exhausted".into());
    };
    ensure(c.certified, || "Schottky input not certified".into())?;
    let g = ok(generic_pair(&alpha, &beta, model))?.generators(c.m, c.n);
    ok(Representation::new(vec![g[0].clone(), g[2].clone()], x))
}

fn recognize_sl3(rep: &Representation) -> Result<RecognitionOutcome, String> {
    let model = sl3();
    let calib = Calibration::default_table();
    let schedule = ok(StageSchedule::from_calibration(&model, &calib, 10))?;
    ok(recognize(rep, &schedule, 10, &model, &calib, &RecognizerConfig::default()))
}

/// Certified, exhausted and early-certified inputs, each rerun for byte identity.
fn recognizer() -> Outcome {
    let model = sl3();
    let calib = Calibration::default_table();
    let x = SpdPoint::identity(3);
    let id = Isometry::identity(3);
    let a = Isometry::diagonal_exp(&[2.0, 0.0, -2.0]);
    let cases = [
        ("Schottky", schottky_rep(2, &model, &calib)?, Some(10)),
        ("identity", ok(Representation::new(vec![id.clone(), id], x.clone()))?, None),
        ("commuting", ok(Representation::new(vec![a.clone(), a.power(2)], x.clone()))?, None),
        ("transvection", ok(Representation::new(vec![a], x))?, Some(3)),
    ];
    let mut notes = Vec::new();
    for (name, rep, max_stage) in cases {
        let out = recognize_sl3(&rep)?;
        let again = recognize_sl3(&rep)?;
        let (j1, j2) = (ok(serde_json::to_string(&out))?, ok(serde_json::to_string(&again))?);
        ensure(j1 == j2, || format!("{name}: outcomes differ between runs"))?;
        match (max_stage, out.certified_stage()) {
            (Some(max), Some(s)) if s <= max => notes.push(format!("{name} certified at stage {s}")),
            (None, None) if matches!(out.status, RecognitionStatus::BudgetExhausted { .. }) => notes.push(format!("{name} exhausted")),
            (_, got) => return Err(format!("{name}: expected certification by {max_stage:?}, got {got:?}")),
        }
    }
    Ok(format!("{}; reruns byte-identical", notes.join(", ")))
}

/// End flags of the rays `g^k x` for `g = a, A, b, B`.
fn generator_ends(rep: &Representation, model: &ModelConfig) -> Result<Vec<FlagChain>, String> {
    rep.letters()
        .into_iter()
        .map(|g| {
            let path = ok(DiscretePath::orbit(0, &rep.basepoint, &vec![g; 12]))?;
            Ok(ok(estimate_end(&path, 6, &model.pattern, model.tol.eigengap, 1e-4))?.flag)
        })
        .collect()
}

/// Perturbed certified generators still pass at the relaxed datum, and the end flags of
/// the generator rays barely move.
fn structural_stability() -> Outcome {
    let model = sl3();
    let calib = Calibration::default_table();
    let cfg = RecognizerConfig::default();
    let schedule = ok(StageSchedule::from_calibration(&model, &calib, 10))?;
    let rep = schottky_rep(2, &model, &calib)?;
    let out = ok(recognize(&rep, &schedule, 10, &model, &calib, &cfg))?;
    let stage = out.certified_stage().ok_or("Schottky representation not certified")?;
    let ends = generator_ends(&rep, &model)?;
    let (mut passed, mut failures, mut drift): (usize, Vec<u64>, f64) = (0, Vec::new(), 0.0);
    for seed in 0..50u64 {
        let r = ok(perturb_and_recheck(&rep, &out, &schedule, 1e-3, 0.1, seed, &model, &calib, &cfg))?;
        if r.passes {
            passed += 1;
        } else {
            failures.push(seed);
        }
        let moved = generator_ends(&ok(rep.perturbed(1e-3, seed))?, &model)?;
        for (e0, e1) in ends.iter().zip(&moved) {
            drift = drift.max(e0.distance(e1));
        }
    }
    ensure(passed * 100 >= 95 * 50, || format!("{passed} of 50 pass; failing seeds {failures:?}"))?;
    ensure(drift <= 1e-2, || format!("end flags move by {drift:e}"))?;
    Ok(format!("{passed} of 50 perturbations pass at stage {stage}; end flags move at most {drift:.1e} rad"))
}

/// Samples moved by at most 0.1 still pass at `M + 0.1`.
fn perturbation_lemma() -> Outcome {
    let model = sl3();
    let calib = Calibration::default_table();
    let fixtures = fixtures(&model, &calib)?;
    ensure(!fixtures.is_empty(), || "no certified fixtures".into())?;
    let mut trials = 0;
    for (k, f) in fixtures.iter().enumerate() {
        let relaxed = f.datum.plus(0.1);
        for seed in 0..100u64 {
            let mut rng = sampling::rng(1000 * k as u64 + seed);
            let moved: Vec<SpdPoint> = f.path.points().iter().map(|p| sampling::perturb(&mut rng, p, 0.1)).collect();
            let path = ok(DiscretePath::from_points(f.path.start(), &moved))?;
            let c = ok(morse_check(&path, &relaxed, &f.theta_prime, &model, &calib))?;
            ensure(c.certified, || format!("{} fails with seed {seed}: {:?}", f.name, c.diagnostics))?;
            trials += 1;
        }
    }
    Ok(format!("{} fixtures x 100 seeded trials, {trials} of {trials} pass", fixtures.len()))
}
