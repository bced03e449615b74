//! Morse quasigeodesic certificates: global and windowed checks, local-to-global
//! promotion, end flags and Finsler approximation.
//!
//! Diamond proximity uses diamonds whose tips are path samples. For each intermediate
//! sample the cheapest sufficient upper bound on its distance to the diamond is tried
//! first: exact membership, distance to a tip, distance to a point of the tip
//! geodesic (with a round-off allowance), and finally the subgradient search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Calibration, DatumKey, MorseEntry};
use crate::error::{MorseError, Result};
use crate::flags::{diamond_defect_from_cartan, diamond_distance_bound, frame_flag, project_frame, FlagChain, ParallelSet};
use crate::paths::{DiscretePath, PointSequence};
use crate::straightness::{is_straight_spaced, StraightParams, StraightnessReport};
use crate::symspace::{decompose, regularity_of, Decomposition, Isometry, ModelConfig, ThetaSpec, Tolerances};

/// `(Θ, D, L, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseDatum {
    pub theta: ThetaSpec,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

impl MorseDatum {
    pub fn new(theta: ThetaSpec, d: f64, l: f64, a: f64) -> Result<Self> {
        let m = MorseDatum { theta, d, l, a };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l.is_finite() && self.l >= 1.0) || !(self.d.is_finite() && self.d >= 0.0) || !(self.a.is_finite() && self.a >= 0.0)
        {
            return Err(MorseError::Config(format!(
                "Morse datum needs L ≥ 1, D ≥ 0, A ≥ 0 (got D = {}, L = {}, A = {})",
                self.d, self.l, self.a
            )));
        }
        Ok(())
    }

    /// `M + D′ = (Θ, D + D′, L, A + 2D′)`.
    pub fn plus(&self, dp: f64) -> MorseDatum {
        MorseDatum {
            theta: self.theta.clone(),
            d: self.d + dp,
            l: self.l,
            a: self.a + 2.0 * dp,
        }
    }

    pub fn key(&self) -> DatumKey {
        DatumKey {
            d: self.d,
            l: self.l,
            a: self.a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    MorsePath,
    LocalMorse,
    Schottky,
    Recognized,
}

/// Two-sided quasi-isometry margins; nonnegative means the inequality holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasigeodesicReport {
    pub passes: bool,
    /// `min (d − |Δt|/L + A)`.
    pub lower_margin: f64,
    /// `min (L|Δt| + A − d)`.
    pub upper_margin: f64,
    pub lower_witness: Option<(i64, i64)>,
    pub upper_witness: Option<(i64, i64)>,
    /// Smallest and largest `d / |Δt|` over all pairs.
    pub min_slope: f64,
    pub max_slope: f64,
    pub pairs: usize,
}

/// Worst margins of a Morse check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MorseDiagnostics {
    pub quasigeodesic: Option<QuasigeodesicReport>,
    /// Pairs at least this far apart are checked.
    pub threshold: f64,
    /// Allowed distance to the tip-anchored diamond.
    pub budget: f64,
    /// Largest distance bound over checked samples; `None` if nothing was checked.
    pub max_diamond_bound: Option<f64>,
    /// First `(t_1, t, t_2)` whose bound exceeds the budget.
    pub diamond_witness: Option<[i64; 3]>,
    /// Checked pairs whose tip segment is not `Θ′`-regular.
    pub irregular_pairs: usize,
    pub checked_pairs: usize,
    pub exempt_pairs: usize,
    pub checked_points: usize,
    /// Samples that needed the subgradient search.
    pub searched_points: usize,
    /// Samples with no finite bound (empty diamond or failed search).
    pub unbounded_points: usize,
    /// Window bookkeeping of the local check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_window: Option<(i64, i64)>,
    /// The domain was shorter than the window, so the whole path was checked once.
    #[serde(default)]
    pub short_domain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub certified: bool,
    pub datum: MorseDatum,
    /// Relaxed set of the diamonds.
    pub theta_prime: ThetaSpec,
    /// Window length, recognizer stage or word length, depending on the kind.
    pub scale: Option<usize>,
    pub tolerances: Tolerances,
    pub diagnostics: MorseDiagnostics,
    pub calibration_id: String,
}

/// Transporters `x_i → x_j` and their decompositions for all `i < j`.
struct PairTable {
    len: usize,
    cells: Vec<Option<(Isometry, Decomposition)>>,
}

impl PairTable {
    fn new(steps: &[Isometry], dim: usize) -> Self {
        let len = steps.len() + 1;
        let rows: Vec<Vec<Option<(Isometry, Decomposition)>>> = (0..len)
            .into_par_iter()
            .map(|i| {
                let mut row: Vec<Option<(Isometry, Decomposition)>> = (0..len).map(|_| None).collect();
                let mut acc = Isometry::identity(dim);
                for j in i + 1..len {
                    acc = acc.compose(&steps[j - 1]);
                    let d = decompose(&acc);
                    row[j] = Some((acc.clone(), d));
                }
                row
            })
            .collect();
        PairTable {
            len,
            cells: rows.into_iter().flatten().collect(),
        }
    }

    fn get(&self, i: usize, j: usize) -> &(Isometry, Decomposition) {
        self.cells[i * self.len + j].as_ref().expect("i < j")
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).1.cartan().norm()
    }
}

fn qg_pair_ok(dt: f64, d: f64, l: f64, a: f64) -> (f64, f64, bool) {
    let lower = d - (dt / l - a);
    let upper = l * dt + a - d;
    // Distances carry relative round-off from long transporter products.
    let slack = 1e-9 * (1.0 + d);
    (lower, upper, lower >= -slack && upper >= -slack)
}

fn qg_report(times: &[i64], pairs: &[(usize, usize)], dist: impl Fn(usize, usize) -> f64, l: f64, a: f64) -> QuasigeodesicReport {
    let mut r = QuasigeodesicReport {
        passes: true,
        lower_margin: f64::INFINITY,
        upper_margin: f64::INFINITY,
        lower_witness: None,
        upper_witness: None,
        min_slope: f64::INFINITY,
        max_slope: 0.0,
        pairs: 0,
    };
    for &(i, j) in pairs {
        let dt = (times[j] - times[i]) as f64;
        let d = dist(i, j);
        let (lower, upper, ok) = qg_pair_ok(dt, d, l, a);
        if lower < r.lower_margin {
            r.lower_margin = lower;
            r.lower_witness = Some((times[i], times[j]));
        }
        if upper < r.upper_margin {
            r.upper_margin = upper;
            r.upper_witness = Some((times[i], times[j]));
        }
        r.min_slope = r.min_slope.min(d / dt);
        r.max_slope = r.max_slope.max(d / dt);
        r.pairs += 1;
        r.passes &= ok;
    }
    r
}

fn all_pairs(len: usize, max_gap: usize) -> Vec<(usize, usize)> {
    (0..len).flat_map(|i| (i + 1..len.min(i + max_gap + 1)).map(move |j| (i, j))).collect()
}

/// Checks `|Δt|/L − A ≤ d(p(t), p(t′)) ≤ L|Δt| + A` for every pair of samples.
pub fn quasigeodesic_check(path: &DiscretePath, l: f64, a: f64) -> Result<QuasigeodesicReport> {
    if path.len() < 2 {
        return Err(MorseError::DomainTooShort("need at least two samples".into()));
    }
    if !(l >= 1.0 && a >= 0.0) {
        return Err(MorseError::Config(format!("need L ≥ 1 and A ≥ 0, got L = {l}, A = {a}")));
    }
    let table = PairTable::new(path.steps(), path.dim());
    let pairs = all_pairs(path.len(), path.len());
    Ok(qg_report(&path.times(), &pairs, |i, j| table.dist(i, j), l, a))
}

/// Smallest `L ≥ 1` for which the samples form an `(L, A)`-quasigeodesic.
pub fn fit_multiplicative(path: &DiscretePath, a: f64) -> Result<f64> {
    if path.len() < 2 {
        return Err(MorseError::DomainTooShort("need at least two samples".into()));
    }
    let table = PairTable::new(path.steps(), path.dim());
    Ok(fit_from(&path.times(), |i, j| table.dist(i, j), a))
}

fn fit_from(times: &[i64], dist: impl Fn(usize, usize) -> f64, a: f64) -> f64 {
    let mut l: f64 = 1.0;
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            let dt = (times[j] - times[i]) as f64;
            let d = dist(i, j);
            if d > a {
                l = l.max((d - a) / dt);
            }
            if d + a > 0.0 {
                l = l.max(dt / (d + a));
            } else {
                l = f64::INFINITY;
            }
        }
    }
    l
}

const MEMBER_TOL: f64 = 1e-9;
const SEARCH_TOL: f64 = 1e-6;

/// Settings of a diamond proximity scan.
#[derive(Debug, Clone, Copy)]
struct Scan<'a> {
    theta_prime: &'a ThetaSpec,
    model: &'a ModelConfig,
    budget: f64,
    /// Keep tightening bounds after one falls under the budget (used when fitting).
    exhaustive: bool,
}

#[derive(Debug, Clone, Copy)]
struct PointBound {
    bound: f64,
    searched: bool,
}

/// `q · diag(e^{s·logs})` with its inverse.
fn diag_iso(q: &crate::linalg::Mat, logs: &[f64], s: f64) -> Isometry {
    let e = nalgebra::DVector::from_iterator(logs.len(), logs.iter().map(|l| (s * l).exp()));
    let ei = e.map(|x| 1.0 / x);
    let g = q * crate::linalg::Mat::from_diagonal(&e);
    let gi = crate::linalg::Mat::from_diagonal(&ei) * q.transpose();
    Isometry::from_parts(g, gi)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `d(z, γ(s))` for the geodesic `γ` from `x_a` to `x_b`, plus a round-off allowance.
/// Anchored at the nearer tip so the intermediate products stay as small as possible.
fn geodesic_bound(t_az: &Isometry, d_az: &Decomposition, t_zb: &Isometry, d_zb: &Decomposition, d_ab: &Decomposition, s: f64) -> f64 {
    let n = d_ab.log_sv.len() as f64;
    let (r, e_fwd, e_inv) = if s <= 0.5 {
        let g = diag_iso(&d_ab.u, &d_ab.log_sv, s);
        let r = t_az.inverse().compose(&g);
        let e_fwd = (-min_of(&d_az.log_sv) + s * max_of(&d_ab.log_sv)).exp();
        let e_inv = (max_of(&d_az.log_sv) - s * min_of(&d_ab.log_sv)).exp();
        (r, e_fwd, e_inv)
    } else {
        let g = diag_iso(&d_ab.v, &d_ab.log_sv, s - 1.0);
        let r = t_zb.compose(&g);
        let e_fwd = (max_of(&d_zb.log_sv) - (1.0 - s) * min_of(&d_ab.log_sv)).exp();
        let e_inv = (-min_of(&d_zb.log_sv) + (1.0 - s) * max_of(&d_ab.log_sv)).exp();
        (r, e_fwd, e_inv)
    };
    let dr = decompose(&r);
    let spread = dr.log_sv.iter().map(|l| l.abs()).fold(0.0, f64::max).exp();
    let err = 4.0 * n * n * f64::EPSILON * e_fwd.max(e_inv) * spread;
    dr.cartan().norm() + err
}

/// Upper bound on the distance from `z` to `◊_{Θ′}(x_a, x_b)`.
fn point_bound(t_az: &Isometry, d_az: &Decomposition, t_zb: &Isometry, d_zb: &Decomposition, d_ab: &Decomposition, sc: &Scan) -> PointBound {
    let (c_az, c_zb, c_ab) = (d_az.cartan(), d_zb.cartan(), d_ab.cartan());
    let dd = diamond_defect_from_cartan(&c_az, &c_zb, &c_ab, sc.theta_prime, &sc.model.finsler_type, MEMBER_TOL * (1.0 + c_ab.norm()));
    if dd.member {
        return PointBound { bound: 0.0, searched: false };
    }
    let done = |b: f64| !sc.exhaustive && b <= sc.budget;
    let mut best = c_az.norm().min(c_zb.norm());
    if done(best) {
        return PointBound { bound: best, searched: false };
    }
    let f = |s: f64| geodesic_bound(t_az, d_az, t_zb, d_zb, d_ab, s);
    let s0 = c_az.norm() / (c_az.norm() + c_zb.norm());
    best = best.min(f(s0));
    if done(best) {
        return PointBound { bound: best, searched: false };
    }
    // Golden-section search; the distance to a geodesic is convex in its parameter.
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..24 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
        best = best.min(f1.min(f2));
        if done(best) {
            return PointBound { bound: best, searched: false };
        }
    }
    let polyak = diamond_distance_bound(t_az, t_zb, sc.theta_prime, &sc.model.finsler_type, SEARCH_TOL);
    PointBound {
        bound: best.min(polyak.bound),
        searched: true,
    }
}

struct PairResult {
    exempt: bool,
    irregular: bool,
    points: Vec<(usize, PointBound)>,
}

fn scan_pair(table: &PairTable, i: usize, j: usize, sc: &Scan, threshold: f64) -> PairResult {
    let (_, d_ij) = table.get(i, j);
    let c = d_ij.cartan();
    if c.norm() < threshold {
        return PairResult {
            exempt: true,
            irregular: false,
            points: Vec::new(),
        };
    }
    let regular = regularity_of(&c, sc.theta_prime, sc.model.tol.eigengap).is_ok_and(|r| r.regular);
    if !regular {
        return PairResult {
            exempt: false,
            irregular: true,
            points: Vec::new(),
        };
    }
    let points = (i + 1..j)
        .map(|z| {
            let (t_az, d_az) = table.get(i, z);
            let (t_zb, d_zb) = table.get(z, j);
            (z, point_bound(t_az, d_az, t_zb, d_zb, d_ij, sc))
        })
        .collect();
    PairResult {
        exempt: false,
        irregular: false,
        points,
    }
}

/// Folds pair results (in a fixed order) into the diagnostics.
fn tally(diag: &mut MorseDiagnostics, times: &[i64], i: usize, j: usize, r: &PairResult) -> bool {
    let mut ok = true;
    if r.exempt {
        diag.exempt_pairs += 1;
        return true;
    }
    diag.checked_pairs += 1;
    if r.irregular {
        diag.irregular_pairs += 1;
        if diag.diamond_witness.is_none() {
            diag.diamond_witness = Some([times[i], times[(i + j) / 2], times[j]]);
        }
        return false;
    }
    for (z, pb) in &r.points {
        diag.checked_points += 1;
        diag.searched_points += pb.searched as usize;
        if pb.bound.is_finite() {
            diag.max_diamond_bound = Some(diag.max_diamond_bound.map_or(pb.bound, |m: f64| m.max(pb.bound)));
        } else {
            diag.unbounded_points += 1;
        }
        if !(pb.bound <= diag.budget) {
            ok = false;
            if diag.diamond_witness.is_none() {
                diag.diamond_witness = Some([times[i], times[*z], times[j]]);
            }
        }
    }
    ok
}

/// Quasigeodesic and diamond outcome of every pair `(i, j)` with `j − i ≤ max_gap`.
struct PathScan {
    times: Vec<i64>,
    pairs: Vec<(usize, usize)>,
    results: Vec<PairResult>,
    qg: QuasigeodesicReport,
    qg_ok: Vec<bool>,
}

fn scan_path(path: &DiscretePath, (l, a): (f64, f64), sc: &Scan, threshold: f64, max_gap: usize) -> PathScan {
    let table = PairTable::new(path.steps(), path.dim());
    let times = path.times();
    let pairs = all_pairs(path.len(), max_gap);
    let qg = qg_report(&times, &pairs, |i, j| table.dist(i, j), l, a);
    let qg_ok = pairs
        .iter()
        .map(|&(i, j)| qg_pair_ok((times[j] - times[i]) as f64, table.dist(i, j), l, a).2)
        .collect();
    let results = pairs.par_iter().map(|&(i, j)| scan_pair(&table, i, j, sc, threshold)).collect();
    PathScan {
        times,
        pairs,
        results,
        qg,
        qg_ok,
    }
}

impl PathScan {
    /// Diagnostics over the pairs selected by `keep`; returns the verdict too.
    fn summarize(&self, sc: &Scan, threshold: f64, keep: impl Fn(usize, usize) -> bool) -> (bool, MorseDiagnostics) {
        let mut diag = MorseDiagnostics {
            threshold,
            budget: sc.budget,
            ..MorseDiagnostics::default()
        };
        let mut ok = true;
        for (k, (&(i, j), r)) in self.pairs.iter().zip(&self.results).enumerate() {
            if keep(i, j) {
                ok &= self.qg_ok[k];
                ok &= tally(&mut diag, &self.times, i, j, r);
            }
        }
        (ok, diag)
    }
}

fn check_relaxation(theta: &ThetaSpec, theta_prime: &ThetaSpec) -> Result<()> {
    if !theta.is_strictly_inside(theta_prime) {
        return Err(MorseError::Config(format!(
            "Θ′ must strictly contain Θ (bounds {:?} vs {:?})",
            theta_prime.bounds, theta.bounds
        )));
    }
    Ok(())
}

fn check_inputs(path: &DiscretePath, m: &MorseDatum, theta_prime: &ThetaSpec, model: &ModelConfig) -> Result<()> {
    m.validate()?;
    for n in [m.theta.n, theta_prime.n, model.n] {
        if n != path.dim() {
            return Err(MorseError::Dimension {
                expected: path.dim(),
                got: n,
            });
        }
    }
    check_relaxation(&m.theta, theta_prime)?;
    if path.len() < 2 {
        return Err(MorseError::DomainTooShort("need at least two samples".into()));
    }
    Ok(())
}

fn scan_settings<'a>(entry: &MorseEntry, m: &MorseDatum, theta_prime: &'a ThetaSpec, model: &'a ModelConfig) -> (Scan<'a>, f64) {
    (
        Scan {
            theta_prime,
            model,
            budget: entry.budget(m.d),
            exhaustive: false,
        },
        entry.threshold(m.d),
    )
}

/// Certifies that `path` is an `M`-Morse quasigeodesic: it is an `(L, A)`-quasigeodesic
/// and, for every pair of samples at least the calibrated threshold apart, every
/// sample between them lies within the calibrated budget of the `Θ′`-diamond spanned
/// by the pair.
pub fn morse_check(
    path: &DiscretePath,
    m: &MorseDatum,
    theta_prime: &ThetaSpec,
    model: &ModelConfig,
    calib: &Calibration,
) -> Result<Certificate> {
    check_inputs(path, m, theta_prime, model)?;
    let entry = calib.morse(&m.theta, theta_prime, m.key())?;
    let (sc, threshold) = scan_settings(entry, m, theta_prime, model);
    let scan = scan_path(path, (m.l, m.a), &sc, threshold, path.len());
    let (ok, mut diag) = scan.summarize(&sc, threshold, |_, _| true);
    diag.quasigeodesic = Some(scan.qg);
    Ok(Certificate {
        kind: CertificateKind::MorsePath,
        certified: ok,
        datum: m.clone(),
        theta_prime: theta_prime.clone(),
        scale: None,
        tolerances: model.tol,
        diagnostics: diag,
        calibration_id: calib.id.clone(),
    })
}

impl PairResult {
    fn max_bound(&self) -> f64 {
        if self.irregular {
            return f64::INFINITY;
        }
        self.points.iter().map(|(_, p)| p.bound).fold(0.0, f64::max)
    }
}

/// Largest distance bound from samples to the `Θ′`-diamonds of pairs at least
/// `threshold` apart, tightened as far as the search allows. Infinite if some such pair
/// spans an empty diamond; `None` if no pair qualifies.
pub fn measure_diamond_bound(path: &DiscretePath, theta_prime: &ThetaSpec, threshold: f64, model: &ModelConfig) -> Option<f64> {
    let sc = Scan {
        theta_prime,
        model,
        budget: 0.0,
        exhaustive: true,
    };
    let scan = scan_path(path, (1.0, 0.0), &sc, threshold, path.len());
    scan.results.iter().filter(|r| !r.exempt).map(|r| r.max_bound()).reduce(f64::max)
}

/// Checks every window `p|[t_0, t_0 + S]`. A pair of samples lies in a window exactly
/// when their time gap is at most `S`, so each pair is evaluated once.
pub fn local_morse_check(
    path: &DiscretePath,
    m: &MorseDatum,
    s: usize,
    theta_prime: &ThetaSpec,
    model: &ModelConfig,
    calib: &Calibration,
) -> Result<Certificate> {
    if s < 2 {
        return Err(MorseError::Config(format!("window length must be at least 2, got {s}")));
    }
    check_inputs(path, m, theta_prime, model)?;
    let entry = calib.morse(&m.theta, theta_prime, m.key())?;
    let (sc, threshold) = scan_settings(entry, m, theta_prime, model);
    let span = path.len() - 1;
    let short = span <= s;
    let scan = scan_path(path, (m.l, m.a), &sc, threshold, s.min(span));
    let (ok, mut diag) = scan.summarize(&sc, threshold, |_, _| true);
    let windows = if short { 1 } else { span - s + 1 };
    let w = s.min(span);
    // Per-window verdict and worst bound.
    let mut first_bad = None;
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for k in 0..windows {
        let mut good = true;
        let mut top: f64 = 0.0;
        for (idx, (&(i, j), r)) in scan.pairs.iter().zip(&scan.results).enumerate() {
            if i >= k && j <= k + w {
                let pair_ok = scan.qg_ok[idx] && !r.irregular && r.points.iter().all(|(_, p)| p.bound <= sc.budget);
                good &= pair_ok;
                if !r.exempt {
                    top = top.max(r.max_bound());
                }
            }
        }
        if !good && first_bad.is_none() {
            first_bad = Some(k);
        }
        if top > worst.0 {
            worst = (top, k);
        }
    }
    let k = first_bad.unwrap_or(worst.1);
    let t0 = path.start() + k as i64;
    diag.windows = Some(windows);
    diag.worst_window = Some((t0, t0 + w as i64));
    diag.short_domain = short;
    diag.quasigeodesic = Some(scan.qg);
    Ok(Certificate {
        kind: CertificateKind::LocalMorse,
        certified: ok,
        datum: m.clone(),
        theta_prime: theta_prime.clone(),
        scale: Some(s),
        tolerances: model.tol,
        diagnostics: diag,
        calibration_id: calib.id.clone(),
    })
}

/// Runs the local check at the calibrated window length and, if it passes, promotes the
/// datum to the calibrated global one and verifies it directly. A failed direct check
/// means the calibration is wrong for this input and is returned as an error.
/// A failed local check is returned as an uncertified local certificate.
pub fn certify_local_to_global(
    path: &DiscretePath,
    m: &MorseDatum,
    theta_prime: &ThetaSpec,
    model: &ModelConfig,
    calib: &Calibration,
) -> Result<Certificate> {
    let entry = calib.local_to_global(&m.theta, theta_prime, m.key())?;
    let local = local_morse_check(path, m, entry.scale, theta_prime, model, calib)?;
    if !local.certified {
        return Ok(local);
    }
    let promoted = MorseDatum::new(theta_prime.clone(), entry.d_prime, entry.l_factor * m.l, entry.a_prime)?;
    let mut global = morse_check(path, &promoted, &entry.theta_check, model, calib)?;
    if !global.certified {
        return Err(MorseError::CalibrationDefect(format!(
            "local check passed at S = {} but the promoted datum (D′ = {}, L′ = {}, A′ = {}) fails: max bound {:?} vs budget {}, witness {:?}, quasigeodesic margins {:?}",
            entry.scale,
            promoted.d,
            promoted.l,
            promoted.a,
            global.diagnostics.max_diamond_bound,
            global.diagnostics.budget,
            global.diagnostics.diamond_witness,
            global.diagnostics.quasigeodesic.as_ref().map(|q| (q.lower_margin, q.upper_margin)),
        )));
    }
    global.scale = Some(entry.scale);
    Ok(global)
}

/// End flag of a quasiray together with its stability probe.
#[derive(Debug, Clone)]
pub struct EndEstimate {
    pub flag: FlagChain,
    /// Largest principal angle between the flags seen at `t` and at the halfway time.
    pub drift: f64,
    pub time: i64,
}

/// `τ(p(t_min) p(t))` at the last sample, provided it agrees with the flag at the
/// halfway time to `flag_tol`.
pub fn estimate_end(path: &DiscretePath, tail: usize, pattern: &[usize], eigengap: f64, flag_tol: f64) -> Result<EndEstimate> {
    let span = path.len() - 1;
    if tail < 2 || span < tail {
        return Err(MorseError::DomainTooShort(format!("tail {tail} needs at least that many steps (have {span})")));
    }
    let local = |k: usize| -> Result<FlagChain> {
        let mut acc = Isometry::identity(path.dim());
        for s in &path.steps()[..k] {
            acc = acc.compose(s);
        }
        frame_flag(&decompose(&acc), pattern, eigengap)
    };
    let full = local(span)?;
    let half = local(span.div_ceil(2))?;
    let drift = full.distance(&half);
    if drift > flag_tol {
        return Err(MorseError::DomainTooShort(format!(
            "end flag unstable: drift {drift:.3e} between t and t/2 exceeds {flag_tol:.1e}"
        )));
    }
    Ok(EndEstimate {
        flag: full.transform(path.base().frame()),
        drift,
        time: path.end(),
    })
}

/// Vertices of a piecewise geodesic approximating a Morse quasigeodesic.
#[derive(Debug, Clone)]
pub struct FinslerApproximation {
    pub vertices: PointSequence,
    /// Sample times chosen as vertices.
    pub indices: Vec<i64>,
    /// Largest distance from a sample to the piecewise geodesic at the matching parameter.
    pub sup_distance: f64,
    pub straightness: StraightnessReport,
}

/// Projects a maximal `S`-separated subset of samples (greedy from the start, always
/// ending at the last sample) onto the parallel set spanned by the endpoint segment.
pub fn finsler_approximate(
    path: &DiscretePath,
    m: &MorseDatum,
    theta_prime: &ThetaSpec,
    s: f64,
    model: &ModelConfig,
    calib: &Calibration,
) -> Result<FinslerApproximation> {
    check_inputs(path, m, theta_prime, model)?;
    if !(s > 0.0) {
        return Err(MorseError::Config("separation S must be positive".into()));
    }
    let entry = calib.morse(&m.theta, theta_prime, m.key())?;
    let straight = calib.straightness(&m.theta, theta_prime, f64::INFINITY)?;
    let table = PairTable::new(path.steps(), path.dim());
    let last = path.len() - 1;
    let needed = entry.threshold(m.d) + 2.0 * s;
    if table.dist(0, last) < needed {
        return Err(MorseError::DomainTooShort(format!(
            "endpoints {:.3} apart, need at least {needed:.3}",
            table.dist(0, last)
        )));
    }
    let mut kept = vec![0usize];
    for j in 1..last {
        if table.dist(*kept.last().unwrap(), j) >= s && table.dist(j, last) >= s {
            kept.push(j);
        }
    }
    kept.push(last);

    let tip = &table.get(0, last).1;
    let ps = ParallelSet::from_transformer(Isometry::from_parts(tip.u.clone(), tip.u.transpose()), &theta_prime.pattern)?;
    // Vertex frames relative to the frame of p(t_0).
    let frames: Vec<Isometry> = kept
        .par_iter()
        .map(|&j| {
            if j == 0 {
                return Ok(Isometry::identity(path.dim()));
            }
            let pr = project_frame(&ps, &table.get(0, j).0, model.tol.projection)?;
            Ok(ps.transformer.compose(&pr.block_frame))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sup: f64 = 0.0;
    for (k, w) in kept.windows(2).enumerate() {
        let seg = decompose(&frames[k].inverse().compose(&frames[k + 1]));
        for t in w[0]..=w[1] {
            let u = (t - w[0]) as f64 / (w[1] - w[0]) as f64;
            let along = frames[k].compose(&diag_iso(&seg.u, &seg.log_sv, u));
            let at = if t == 0 { Isometry::identity(path.dim()) } else { table.get(0, t).0.clone() };
            sup = sup.max(decompose(&at.inverse().compose(&along)).cartan().norm());
        }
    }
    let steps = frames.windows(2).map(|f| f[0].inverse().compose(&f[1])).collect();
    let times: Vec<i64> = kept.iter().map(|&j| path.start() + j as i64).collect();
    let vertices = PointSequence::from_steps(times.clone(), path.base().clone(), steps)?;
    let straightness = is_straight_spaced(
        &vertices,
        &StraightParams {
            theta: theta_prime.clone(),
            epsilon: straight.epsilon,
            spacing: s,
            zeta: model.zeta.clone(),
            eigengap: model.tol.eigengap,
        },
    )?;
    Ok(FinslerApproximation {
        vertices,
        indices: times,
        sup_distance: sup,
        straightness,
    })
}
