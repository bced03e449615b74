//! Straight spaced sequences, moving away from a flag, and the quadruple condition.
//!
//! Every margin is signed so that nonnegative means the condition holds. Geometry is
//! evaluated from transporters between neighbouring points, never from absolute
//! coordinates, so long sequences keep full relative accuracy.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MorseError, Result};
use crate::flags::{cone_defect_in_frame, frame_flag, parallel_set, project_frame, zeta_angle_at_identity, FlagChain};
use crate::linalg::Mat;
use crate::paths::{DiscretePath, PointSequence};
use crate::symspace::{decompose, regularity_of, Decomposition, Isometry, ThetaSpec, TypeVector};

/// Parameters of a `(Θ, ε)`-straight `l`-spaced test.
#[derive(Debug, Clone)]
pub struct StraightParams {
    pub theta: ThetaSpec,
    pub epsilon: f64,
    pub spacing: f64,
    pub zeta: TypeVector,
    pub eigengap: f64,
}

/// Margins attached to one point of a sequence (or one quadruple).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub index: usize,
    pub times: Vec<i64>,
    /// `d(x_k, x_{k+1}) − l` for the outgoing segment.
    pub spacing_gap: Option<f64>,
    pub regularity_margin: Option<f64>,
    /// `∠ − (π − ε)` at an interior point.
    pub angle_gap: Option<f64>,
}

impl MarginRow {
    fn ok(&self) -> bool {
        [self.spacing_gap, self.regularity_margin, self.angle_gap]
            .iter()
            .all(|g| g.is_none_or(|v| v >= 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraightnessReport {
    pub straight: bool,
    /// Minimum of `∠ − (π − ε)`; `None` when there is no interior point.
    pub worst_angle_gap: Option<f64>,
    /// Minimum of `d − l`; `None` when there is no segment.
    pub worst_spacing_gap: Option<f64>,
    pub worst_regularity_margin: Option<f64>,
    /// First violating row, in enumeration order.
    pub witness_index: Option<usize>,
    pub witness_times: Option<Vec<i64>>,
    pub checked: usize,
    pub rows: Vec<MarginRow>,
}

fn min_opt(acc: Option<f64>, v: Option<f64>) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

impl StraightnessReport {
    fn from_rows(rows: Vec<MarginRow>) -> Self {
        let mut r = StraightnessReport {
            straight: true,
            worst_angle_gap: None,
            worst_spacing_gap: None,
            worst_regularity_margin: None,
            witness_index: None,
            witness_times: None,
            checked: rows.len(),
            rows: Vec::new(),
        };
        for row in &rows {
            r.worst_angle_gap = min_opt(r.worst_angle_gap, row.angle_gap);
            r.worst_spacing_gap = min_opt(r.worst_spacing_gap, row.spacing_gap);
            r.worst_regularity_margin = min_opt(r.worst_regularity_margin, row.regularity_margin);
            if r.straight && !row.ok() {
                r.straight = false;
                r.witness_index = Some(row.index);
                r.witness_times = Some(row.times.clone());
            }
        }
        r.rows = rows;
        r
    }

    /// Per-row margins as CSV (empty cells for vacuous margins).
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let mut out = String::from("index,times,spacing_gap,regularity_margin,angle_gap\n");
        for r in &self.rows {
            let times: Vec<String> = r.times.iter().map(|t| t.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.index,
                times.join(" "),
                cell(r.spacing_gap),
                cell(r.regularity_margin),
                cell(r.angle_gap)
            ));
        }
        out
    }
}

/// Margins of the segment with decomposition `d`. Coincident endpoints are an error.
fn segment_margins(d: &Decomposition, p: &StraightParams) -> Result<(f64, f64)> {
    let c = d.cartan();
    let reg = regularity_of(&c, &p.theta, p.eigengap)?;
    Ok((c.norm() - p.spacing, reg.margin))
}

/// `∠ − (π − ε)` at a point between the outgoing segments `back` and `fwd`.
/// An undefined flag counts as angle zero.
fn angle_gap(back: &Decomposition, fwd: &Decomposition, p: &StraightParams) -> Result<f64> {
    let pattern = &p.theta.pattern;
    let angle = match (frame_flag(back, pattern, p.eigengap), frame_flag(fwd, pattern, p.eigengap)) {
        (Ok(f1), Ok(f2)) => zeta_angle_at_identity(&f1, &f2, &p.zeta)?,
        _ => 0.0,
    };
    Ok(angle - (PI - p.epsilon))
}

fn check_params(n: usize, p: &StraightParams) -> Result<()> {
    if p.theta.n != n {
        return Err(MorseError::Dimension {
            expected: n,
            got: p.theta.n,
        });
    }
    if !(p.epsilon >= 0.0 && p.epsilon <= PI) || !(p.spacing >= 0.0) {
        return Err(MorseError::Invalid(format!(
            "need 0 ≤ ε ≤ π and l ≥ 0, got ε = {}, l = {}",
            p.epsilon, p.spacing
        )));
    }
    Ok(())
}

/// Rows for a chain of consecutive transporters `steps[k]: y_k → y_{k+1}`.
fn chain_rows(steps: &[Isometry], times: &[i64], p: &StraightParams) -> Result<Vec<MarginRow>> {
    let fwd: Vec<Decomposition> = steps.iter().map(decompose).collect();
    let back: Vec<Decomposition> = steps.iter().map(|s| decompose(&s.inverse())).collect();
    let mut rows = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let (spacing_gap, regularity_margin) = match fwd.get(k) {
            Some(d) => {
                let (s, r) = segment_margins(d, p)?;
                (Some(s), Some(r))
            }
            None => (None, None),
        };
        let angle_gap = if k >= 1 && k < steps.len() {
            Some(angle_gap(&back[k - 1], &fwd[k], p)?)
        } else {
            None
        };
        rows.push(MarginRow {
            index: k,
            times: vec![times[k]],
            spacing_gap,
            regularity_margin,
            angle_gap,
        });
    }
    Ok(rows)
}

/// Checks that consecutive segments are Θ-regular and at least `l` long, and that the
/// ζ-angle at every interior point between its neighbours is at least `π − ε`.
pub fn is_straight_spaced(seq: &PointSequence, p: &StraightParams) -> Result<StraightnessReport> {
    check_params(seq.dim(), p)?;
    if seq.len() < 2 {
        return Err(MorseError::Invalid("need at least two points".into()));
    }
    Ok(StraightnessReport::from_rows(chain_rows(seq.steps(), seq.times(), p)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovesAwayReport {
    pub moves_away: bool,
    /// Minimum of `∠^ζ_{x_k}(F, x_{k+1}) − (π − ε)`.
    pub worst_angle_gap: f64,
    pub witness_index: Option<usize>,
    pub angles: Vec<f64>,
}

/// Whether `∠^ζ_{x_k}(F, x_{k+1}) ≥ π − ε` for every `k`.
pub fn moves_away(
    seq: &PointSequence,
    f: &FlagChain,
    epsilon: f64,
    zeta: &TypeVector,
    eigengap: f64,
) -> Result<MovesAwayReport> {
    if f.dim() != seq.dim() {
        return Err(MorseError::Dimension {
            expected: seq.dim(),
            got: f.dim(),
        });
    }
    if seq.len() < 2 {
        return Err(MorseError::Invalid("need at least two points".into()));
    }
    // F carried along the sequence one step at a time.
    let mut local = f.transform(&seq.base().frame().inverse());
    let mut angles = Vec::with_capacity(seq.steps().len());
    for s in seq.steps() {
        let d = decompose(s);
        if d.cartan().norm() <= eigengap {
            return Err(MorseError::Coincident);
        }
        let seg = frame_flag(&d, f.pattern(), eigengap)?;
        angles.push(zeta_angle_at_identity(&local, &seg, zeta)?);
        local = local.transform(&s.inverse());
    }
    let gaps: Vec<f64> = angles.iter().map(|a| a - (PI - epsilon)).collect();
    Ok(MovesAwayReport {
        moves_away: gaps.iter().all(|&g| g >= 0.0),
        worst_angle_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        witness_index: gaps.iter().position(|&g| g < 0.0),
        angles,
    })
}

/// Square-root factor `G = U Σ^{1/2}` of a segment, the transporter from its start to
/// its midpoint, together with `Σ^{1/2} Vᵀ`, the transporter from the midpoint to the
/// end up to the right factor.
struct Half {
    to_mid: Isometry,
    mid_to_end_left: Mat,
    mid_to_end_left_inv: Mat,
}

impl Half {
    fn new(d: &Decomposition) -> Self {
        let n = d.log_sv.len();
        let h = nalgebra::DVector::from_iterator(n, d.log_sv.iter().map(|l| (0.5 * l).exp()));
        let hi = h.map(|v| 1.0 / v);
        let to_mid = Isometry::from_parts(&d.u * Mat::from_diagonal(&h), Mat::from_diagonal(&hi) * d.u.transpose());
        Half {
            to_mid,
            mid_to_end_left: Mat::from_diagonal(&h) * d.v.transpose(),
            mid_to_end_left_inv: &d.v * Mat::from_diagonal(&hi),
        }
    }

    /// Transporter from this segment's midpoint to the midpoint of `next`, which starts
    /// where this one ends.
    fn to_next_mid(&self, next: &Half) -> Isometry {
        Isometry::from_parts(
            &self.mid_to_end_left * next.to_mid.matrix(),
            next.to_mid.inverse_matrix() * &self.mid_to_end_left_inv,
        )
    }
}

/// Midpoints `m_k = mid(p(t_0 + ks), p(t_0 + (k+1)s))`, each stamped with the time of
/// its left endpoint.
pub fn midpoint_sequence(path: &DiscretePath, s: usize) -> Result<PointSequence> {
    let coarse = path.coarse_samples(s)?;
    if coarse.len() < 2 {
        return Err(MorseError::Invalid(format!(
            "domain of length {} too short for scale {s}",
            path.len() - 1
        )));
    }
    let halves: Vec<Half> = coarse.steps().iter().map(|w| Half::new(&decompose(w))).collect();
    let base = coarse.base().frame_compose(&halves[0].to_mid);
    let steps = halves.windows(2).map(|w| w[0].to_next_mid(&w[1])).collect();
    let times = coarse.times()[..halves.len()].to_vec();
    PointSequence::from_steps(times, base, steps)
}

/// How quadruples `t_1 < t_2 < t_3 < t_4` with gaps at least `s` are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuadrupleMode {
    /// Times on the grid `t_0 + ks` plus the right endpoint.
    #[default]
    Grid,
    /// Every sample time.
    Exhaustive,
}

/// Offsets eligible as quadruple entries.
fn candidate_offsets(len: usize, s: usize, mode: QuadrupleMode) -> Vec<usize> {
    match mode {
        QuadrupleMode::Exhaustive => (0..len).collect(),
        QuadrupleMode::Grid => {
            let mut v: Vec<usize> = (0..len).step_by(s).collect();
            if *v.last().unwrap() != len - 1 {
                v.push(len - 1);
            }
            v
        }
    }
}

/// All quadruples of candidate positions with consecutive offset gaps at least `s`.
fn quadruples(offsets: &[usize], s: usize) -> Vec<[usize; 4]> {
    let m = offsets.len();
    let mut out = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            if offsets[b] - offsets[a] < s {
                continue;
            }
            for c in b + 1..m {
                if offsets[c] - offsets[b] < s {
                    continue;
                }
                for d in c + 1..m {
                    if offsets[d] - offsets[c] >= s {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

/// Checks that for every quadruple of sample times with gaps at least `s` the midpoint
/// triple `(mid(t_1,t_2), mid(t_2,t_3), mid(t_3,t_4))` is straight and spaced.
pub fn quadruple_condition(
    path: &DiscretePath,
    p: &StraightParams,
    s: usize,
    mode: QuadrupleMode,
) -> Result<StraightnessReport> {
    check_params(path.dim(), p)?;
    if s == 0 {
        return Err(MorseError::Invalid("scale must be at least 1".into()));
    }
    let offsets = candidate_offsets(path.len(), s, mode);
    let m = offsets.len();
    // Half-segment data for every ordered candidate pair.
    let table: Vec<Vec<Option<Half>>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<Option<Half>> = (0..m).map(|_| None).collect();
            let mut acc = Isometry::identity(path.dim());
            let mut at = offsets[i];
            for j in i + 1..m {
                for step in &path.steps()[at..offsets[j]] {
                    acc = acc.compose(step);
                }
                at = offsets[j];
                if offsets[j] - offsets[i] >= s {
                    row[j] = Some(Half::new(&decompose(&acc)));
                }
            }
            row
        })
        .collect();
    let quads = quadruples(&offsets, s);
    let rows: Vec<Result<MarginRow>> = quads
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let h = |i: usize, j: usize| table[q[i]][q[j]].as_ref().expect("gap at least s");
            let a = h(0, 1).to_next_mid(h(1, 2));
            let b = h(1, 2).to_next_mid(h(2, 3));
            let times: Vec<i64> = q.iter().map(|&k| path.start() + offsets[k] as i64).collect();
            let r = chain_rows(&[a, b], &times[..3], p)?;
            Ok(MarginRow {
                index: qi,
                times,
                spacing_gap: min_opt(r[0].spacing_gap, r[1].spacing_gap),
                regularity_margin: min_opt(r[0].regularity_margin, r[1].regularity_margin),
                angle_gap: r[1].angle_gap,
            })
        })
        .collect();
    Ok(StraightnessReport::from_rows(rows.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Outcome of checking the conclusion of the Morse lemma for a finite sequence against
/// the parallel set of its estimated end flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseLemmaReport {
    pub holds: bool,
    /// `max_k d(x_k, P)`.
    pub max_distance: f64,
    /// Worst Θ′ margin over the cone-nesting pairs of projections.
    pub worst_cone_margin: f64,
    /// Worst flag mismatch over the same pairs.
    pub worst_flag_mismatch: f64,
    /// First failing pair `(k, k')`, meaning `x̄_{k'} ∉ V(x̄_k, st(τ±))`.
    pub witness: Option<(usize, usize)>,
    /// Largest `c` with `d(x_j, x_k) ≥ c l (k − j) − 2δ` for all `j < k`.
    pub spacing_constant: f64,
    pub checked_pairs: usize,
}

/// Tolerances for [`morse_lemma_conclusion`].
#[derive(Debug, Clone, Copy)]
pub struct ConclusionTolerances {
    pub eigengap: f64,
    pub flag: f64,
    pub projection: f64,
}

/// Estimated end flags of a finite sequence: `τ₊` continues the diagonal segment
/// `x_0 x_N` beyond `x_N` and `τ₋` continues it beyond `x_0`, so `P(τ₋, τ₊)` is the
/// parallel set through the segment. Returns `(τ₋, τ₊)` seen from each `x_k`, in its
/// frame. Each flag is computed at the endpoint where it is well determined and
/// carried along by transporters that attract it.
pub fn estimated_end_flags(
    seq: &PointSequence,
    pattern: &[usize],
    eigengap: f64,
) -> Result<Vec<(FlagChain, FlagChain)>> {
    let last = seq.len().checked_sub(1).filter(|&l| l > 0).ok_or_else(|| MorseError::Invalid("need at least two points".into()))?;
    let reversed = |d: &Decomposition| {
        let cols: Vec<_> = d.u.column_iter().rev().map(|c| c.into_owned()).collect();
        FlagChain::from_basis(&Mat::from_columns(&cols), pattern)
    };
    // Opposite of τ(x_0 x_N) at x_0, and of τ(x_N x_0) at x_N.
    let at_start = decompose(&seq.transporter(0, last));
    let at_end = decompose(&seq.transporter(last, 0));
    frame_flag(&at_start, pattern, eigengap)?;
    let minus0 = reversed(&at_start)?;
    let plus_n = reversed(&at_end)?;
    Ok((0..=last)
        .into_par_iter()
        .map(|k| {
            let minus = minus0.transform_decomposed(&decompose(&seq.transporter(k, 0)));
            let plus = plus_n.transform_decomposed(&decompose(&seq.transporter(k, last)));
            (minus, plus)
        })
        .collect())
}

/// Checks that every point lies within `δ` of the parallel set of the estimated end
/// flags and that projections nest in cones:
/// `x̄_{k+m} ∈ V(x̄_k, st_{Θ′}(τ₊))` and `x̄_{k−m} ∈ V(x̄_k, st_{Θ′}(τ₋))` for `m ≥ 1`.
/// Also fits the global spacing constant for step `l`.
pub fn morse_lemma_conclusion(
    seq: &PointSequence,
    theta_prime: &ThetaSpec,
    delta: f64,
    spacing: f64,
    tol: ConclusionTolerances,
) -> Result<MorseLemmaReport> {
    let n = seq.dim();
    if theta_prime.n != n {
        return Err(MorseError::Dimension {
            expected: n,
            got: theta_prime.n,
        });
    }
    let pattern = &theta_prime.pattern;
    let ends = estimated_end_flags(seq, pattern, tol.eigengap)?;
    let len = seq.len();
    // Frame of the projection x̄_k, relative to the frame of x_k.
    let projections = ends
        .par_iter()
        .map(|(minus, plus)| {
            let ps = parallel_set(minus, plus, tol.flag)?;
            let pr = project_frame(&ps, &ps.transformer.inverse(), tol.projection)?;
            Ok((ps.transformer.compose(&pr.block_frame), pr.distance))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_distance = projections.iter().map(|p| p.1).fold(0.0, f64::max);

    // Seen from x̄_k the end flags are the standard pair.
    let plus = FlagChain::standard(n, pattern)?;
    let minus = FlagChain::standard_opposite(n, pattern)?;
    let pairs: Vec<(usize, usize)> = (0..len)
        .flat_map(|a| (0..len).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let defects: Vec<_> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let w = projections[a].0.inverse().compose(&seq.transporter(a, b)).compose(&projections[b].0);
            let flag = if b > a { &plus } else { &minus };
            cone_defect_in_frame(&decompose(&w), flag, theta_prime, tol.eigengap, tol.flag)
        })
        .collect();
    let mut worst_cone_margin = f64::INFINITY;
    let mut worst_flag_mismatch: f64 = 0.0;
    let mut witness = None;
    for (pair, d) in pairs.iter().zip(&defects) {
        worst_cone_margin = worst_cone_margin.min(d.type_margin);
        worst_flag_mismatch = worst_flag_mismatch.max(d.flag_mismatch);
        if witness.is_none() && !d.verdict {
            witness = Some(*pair);
        }
    }

    let mut spacing_constant = f64::INFINITY;
    if spacing > 0.0 {
        for a in 0..len {
            let mut acc = Isometry::identity(n);
            for b in a + 1..len {
                acc = acc.compose(&seq.steps()[b - 1]);
                let d = decompose(&acc).cartan().norm();
                spacing_constant = spacing_constant.min((d + 2.0 * delta) / (spacing * (b - a) as f64));
            }
        }
    }
    Ok(MorseLemmaReport {
        holds: max_distance <= delta && witness.is_none(),
        max_distance,
        worst_cone_margin,
        worst_flag_mismatch,
        witness,
        spacing_constant,
        checked_pairs: pairs.len(),
    })
}
