//! Morse Schottky subgroups generated by powers of a generic pair of axial isometries.
//!
//! Words use the letters `a, A, b, B` for `α^m, α^{-m}, β^n, β^{-n}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::Calibration;
use crate::error::{MorseError, Result};
use crate::flags::{antipodal, attracting_flag, zeta_angle_between_segments, FlagChain};
use crate::morsecheck::{fit_multiplicative, morse_check, MorseDatum};
use crate::paths::DiscretePath;
use crate::straightness::{is_straight_spaced, midpoint_sequence, StraightParams};
use crate::words::{reduced_words, word_string, Word};
use crate::symspace::{
    decompose, geodesic_point_from, regularity_of, transporter, Isometry, ModelConfig, SpdPoint, ThetaSpec, TypeVector,
};

/// Index pairs of the six flag comparisons, flags ordered `τ₊a, τ₋a, τ₊b, τ₋b`.
pub const FLAG_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Clone)]
pub struct AxialPair {
    pub alpha: Isometry,
    pub beta: Isometry,
    pub pattern: Vec<usize>,
    /// `τ₊a, τ₋a, τ₊b, τ₋b`.
    pub flags: [FlagChain; 4],
    /// Types of the axis endpoints, in the same order.
    pub types: [TypeVector; 4],
    /// Antipodality margins in [`FLAG_PAIRS`] order.
    pub margins: [f64; 6],
    pub genericity_margin: f64,
}

impl AxialPair {
    /// Smallest `Θ` margin of the four endpoint types; positive means all lie inside `Θ`.
    pub fn interiority_margin(&self, theta: &ThetaSpec) -> f64 {
        self.types.iter().map(|t| theta.margin(t)).fold(f64::INFINITY, f64::min)
    }

    /// `α^m, α^{-m}, β^n, β^{-n}`.
    pub fn generators(&self, m: usize, n: usize) -> [Isometry; 4] {
        let (m, n) = (m as i64, n as i64);
        [self.alpha.power(m), self.alpha.power(-m), self.beta.power(n), self.beta.power(-n)]
    }
}

/// Normalized log moduli of the eigenvalues, in decreasing order.
fn jordan_type(g: &Isometry) -> Result<TypeVector> {
    let eig = g.matrix().clone().complex_eigenvalues();
    let mut logs: Vec<f64> = eig.iter().map(|z| z.norm().ln()).collect();
    logs.sort_by(|a, b| b.total_cmp(a));
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let centred: Vec<f64> = logs.iter().map(|l| l - mean).collect();
    TypeVector::from_unnormalized(&centred)
}

fn into4<T>(v: Vec<T>) -> [T; 4] {
    v.try_into().unwrap_or_else(|_| unreachable!("four generators"))
}

/// Attracting and repelling flags of both generators and their six antipodality margins.
pub fn generic_pair(alpha: &Isometry, beta: &Isometry, model: &ModelConfig) -> Result<AxialPair> {
    for g in [alpha, beta] {
        if g.dim() != model.n {
            return Err(MorseError::Dimension {
                expected: model.n,
                got: g.dim(),
            });
        }
    }
    let pattern = &model.pattern;
    let gens = [alpha.clone(), alpha.inverse(), beta.clone(), beta.inverse()];
    let mut flags = Vec::with_capacity(4);
    let mut types = Vec::with_capacity(4);
    for g in &gens {
        flags.push(attracting_flag(g, pattern, model.tol.eigengap)?);
        types.push(jordan_type(g)?);
    }
    let mut margins = [0.0; 6];
    for (slot, &(i, j)) in margins.iter_mut().zip(FLAG_PAIRS.iter()) {
        *slot = antipodal(&flags[i], &flags[j], model.tol.flag)?.margin;
    }
    let genericity_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(genericity_margin > model.tol.flag) {
        return Err(MorseError::NotAntipodal {
            margin: genericity_margin,
        });
    }
    Ok(AxialPair {
        alpha: alpha.clone(),
        beta: beta.clone(),
        pattern: pattern.clone(),
        flags: into4(flags),
        types: into4(types),
        margins,
        genericity_margin,
    })
}

/// `(y_m, y_{-m}, z_n, z_{-n})`: midpoints of `x α^{±m}x` and `x β^{±n}x`.
pub fn midpoint_quadruple(pair: &AxialPair, m: usize, n: usize, x: &SpdPoint) -> Result<[SpdPoint; 4]> {
    if m == 0 || n == 0 {
        return Err(MorseError::Invalid("powers must be at least 1".into()));
    }
    if x.dim() != pair.alpha.dim() {
        return Err(MorseError::Dimension {
            expected: pair.alpha.dim(),
            got: x.dim(),
        });
    }
    let f = x.frame();
    let fi = f.inverse();
    let local = [fi.compose(&pair.alpha).compose(f), fi.compose(&pair.beta).compose(f)];
    let mid = |g: &Isometry, k: i64| geodesic_point_from(x, &decompose(&g.power(k)), 0.5);
    let (m, n) = (m as i64, n as i64);
    Ok([mid(&local[0], m), mid(&local[0], -m), mid(&local[1], n), mid(&local[1], -n)])
}

/// Thresholds of [`quadruple_test`].
#[derive(Debug, Clone)]
pub struct QuadrupleParams {
    pub theta: ThetaSpec,
    pub epsilon: f64,
    pub spacing: f64,
    pub zeta: TypeVector,
    pub eigengap: f64,
}

/// Margins of the quadruple test; each is nonnegative when its condition holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrupleReport {
    pub passes: bool,
    /// `min d(w, w′) − l` over the six pairs.
    pub separation_margin: f64,
    /// Smallest `Θ` margin over the six connecting segments and the four segments to `x`.
    pub regularity_margin: f64,
    /// `ε − max ∠^ζ_w(x, w′)`.
    pub angle_margin: f64,
    /// `(w, w′)` attaining the largest angle.
    pub angle_witness: Option<(usize, usize)>,
}

/// Checks separation, `Θ`-regularity and small ζ-angles `∠^ζ_w(x, w′) ≤ ε` for a
/// quadruple around the base point `x`.
pub fn quadruple_test(points: &[SpdPoint; 4], x: &SpdPoint, p: &QuadrupleParams) -> Result<QuadrupleReport> {
    let n = x.dim();
    if points.iter().any(|w| w.dim() != n) || p.theta.n != n {
        return Err(MorseError::Dimension {
            expected: n,
            got: p.theta.n,
        });
    }
    if !(0.0..=std::f64::consts::PI).contains(&p.epsilon) || !(p.spacing >= 0.0) {
        return Err(MorseError::Invalid(format!(
            "need 0 ≤ ε ≤ π and l ≥ 0, got ε = {}, l = {}",
            p.epsilon, p.spacing
        )));
    }
    let pattern = &p.theta.pattern;
    let mut separation = f64::INFINITY;
    let mut regularity = f64::INFINITY;
    let mut max_angle: f64 = 0.0;
    let mut witness = None;
    for (i, w) in points.iter().enumerate() {
        let to_x = transporter(w, x);
        let c = decompose(&to_x).cartan();
        if c.norm() <= p.eigengap {
            return Err(MorseError::Coincident);
        }
        regularity = regularity.min(regularity_of(&c, &p.theta, p.eigengap)?.margin);
        for (j, v) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            let to_v = transporter(w, v);
            let c = decompose(&to_v).cartan();
            if c.norm() <= p.eigengap {
                return Err(MorseError::Coincident);
            }
            if j > i {
                separation = separation.min(c.norm() - p.spacing);
                regularity = regularity.min(regularity_of(&c, &p.theta, p.eigengap)?.margin);
            }
            // A segment without a flag of the face type has no ζ-direction.
            let angle = match zeta_angle_between_segments(&to_x, &to_v, pattern, &p.zeta, p.eigengap) {
                Ok(a) => a,
                Err(MorseError::Degenerate { .. }) => std::f64::consts::PI,
                Err(e) => return Err(e),
            };
            if angle > max_angle || witness.is_none() {
                max_angle = angle;
                witness = Some((i, j));
            }
        }
    }
    let angle_margin = p.epsilon - max_angle;
    Ok(QuadrupleReport {
        passes: separation >= 0.0 && regularity >= 0.0 && angle_margin >= 0.0,
        separation_margin: separation,
        regularity_margin: regularity,
        angle_margin,
        angle_witness: witness,
    })
}

/// One evaluated power pair. Failed evaluations (coincident points) carry `-∞` margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrial {
    pub m: usize,
    pub n: usize,
    pub passes: bool,
    pub separation_margin: f64,
    pub regularity_margin: f64,
    pub angle_margin: f64,
}

impl PowerTrial {
    fn worst(&self) -> f64 {
        self.separation_margin.min(self.regularity_margin).min(self.angle_margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    /// `m = n`.
    #[default]
    Symmetric,
    /// Symmetric search, then `m` and `n` lowered separately.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSearch {
    pub found: Option<(usize, usize)>,
    /// Every evaluated pair, in evaluation order.
    pub trials: Vec<PowerTrial>,
    /// Trial with the largest worst margin.
    pub best: Option<PowerTrial>,
}

impl PowerSearch {
    /// `m,n,passes,separation_margin,regularity_margin,angle_margin` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,passes,separation_margin,regularity_margin,angle_margin\n");
        for t in &self.trials {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e}\n",
                t.m, t.n, t.passes, t.separation_margin, t.regularity_margin, t.angle_margin
            ));
        }
        out
    }
}

fn power_trial(pair: &AxialPair, m: usize, n: usize, x: &SpdPoint, p: &QuadrupleParams) -> Result<PowerTrial> {
    let q = midpoint_quadruple(pair, m, n, x)?;
    Ok(match quadruple_test(&q, x, p) {
        Ok(r) => PowerTrial {
            m,
            n,
            passes: r.passes,
            separation_margin: r.separation_margin,
            regularity_margin: r.regularity_margin,
            angle_margin: r.angle_margin,
        },
        Err(MorseError::Coincident) | Err(MorseError::Degenerate { .. }) => PowerTrial {
            m,
            n,
            passes: false,
            separation_margin: f64::NEG_INFINITY,
            regularity_margin: f64::NEG_INFINITY,
            angle_margin: f64::NEG_INFINITY,
        },
        Err(e) => return Err(e),
    })
}

/// Smallest passing powers `≤ budget` on a doubling-then-bisect schedule, assuming the
/// test is monotone in the powers. Exhaustion is reported through `found = None`.
pub fn search_powers(
    pair: &AxialPair,
    x: &SpdPoint,
    p: &QuadrupleParams,
    budget: usize,
    mode: PowerMode,
) -> Result<PowerSearch> {
    if budget == 0 {
        return Err(MorseError::Invalid("power budget must be at least 1".into()));
    }
    let mut trials: Vec<PowerTrial> = Vec::new();
    let mut eval = |m: usize, n: usize| -> Result<bool> {
        if let Some(t) = trials.iter().find(|t| t.m == m && t.n == n) {
            return Ok(t.passes);
        }
        let t = power_trial(pair, m, n, x, p)?;
        let ok = t.passes;
        trials.push(t);
        Ok(ok)
    };
    // Doubling.
    let mut fail = 0;
    let mut pass = None;
    let mut k = 1;
    loop {
        if eval(k, k)? {
            pass = Some(k);
            break;
        }
        fail = k;
        if k == budget {
            break;
        }
        k = (2 * k).min(budget);
    }
    // Bisect on (fail, pass].
    let found = match pass {
        None => None,
        Some(mut hi) => {
            let mut lo = fail;
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if eval(mid, mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let k = hi;
            match mode {
                PowerMode::Symmetric => Some((k, k)),
                PowerMode::Independent => {
                    let lowest = |eval: &mut dyn FnMut(usize) -> Result<bool>| -> Result<usize> {
                        let (mut lo, mut hi) = (0, k);
                        while hi - lo > 1 {
                            let mid = lo + (hi - lo) / 2;
                            if eval(mid)? {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        Ok(hi)
                    };
                    let m = lowest(&mut |m| eval(m, k))?;
                    let n = lowest(&mut |n| eval(m, n))?;
                    Some((m, n))
                }
            }
        }
    };
    let best = trials.iter().max_by(|a, b| a.worst().total_cmp(&b.worst())).cloned();
    Ok(PowerSearch { found, trials, best })
}

/// Orbit path `γ_0 x, γ_1 x, …` of a word in the generators `α^m, α^{-m}, β^n, β^{-n}`.
pub fn word_path(gens: &[Isometry; 4], word: &[u8], x: &SpdPoint) -> Result<DiscretePath> {
    let steps: Vec<Isometry> = word.iter().map(|&c| gens[c as usize].clone()).collect();
    DiscretePath::orbit(0, x, &steps)
}

/// Aggregate over all reduced words of one length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordReport {
    /// Every reduced word of this length was checked; shorter words are subwords.
    pub length: usize,
    pub words: usize,
    pub passes: bool,
    pub straight_words: usize,
    pub morse_words: usize,
    /// First failing word in lexicographic order and the failed check.
    pub failing_word: Option<String>,
    pub failure: Option<String>,
    pub worst_angle_gap: Option<f64>,
    pub worst_spacing_gap: Option<f64>,
    pub worst_regularity_margin: Option<f64>,
    /// Largest multiplicative constant over all words at the datum's `A`.
    pub fitted_l: f64,
    /// Smallest `d / |Δt|` over all words.
    pub min_slope: f64,
    pub max_diamond_bound: Option<f64>,
    pub datum: MorseDatum,
}

struct WordResult {
    straight: Option<crate::straightness::StraightnessReport>,
    morse: crate::morsecheck::Certificate,
    fitted_l: f64,
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Fitted `(L, min slope)` over all reduced words of length `k` at additive constant `a`.
pub fn fit_words(pair: &AxialPair, m: usize, n: usize, x: &SpdPoint, k: usize, a: f64) -> Result<(f64, f64)> {
    let gens = pair.generators(m, n);
    let words = reduced_words(2, k, u128::MAX)?;
    let fits = words
        .par_iter()
        .map(|w| {
            let path = word_path(&gens, w, x)?;
            let qg = crate::morsecheck::quasigeodesic_check(&path, 1.0, 0.0)?;
            Ok((fit_multiplicative(&path, a)?, qg.min_slope))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fits.iter().fold((1.0, f64::INFINITY), |(l, s), &(fl, fs)| (l.max(fl), s.min(fs))))
}

/// Checks every reduced word of length `k`: its midpoint sequence must be straight and
/// spaced, and its orbit path must pass the Morse check at `(M, Θ′)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_words(
    pair: &AxialPair,
    m: usize,
    n: usize,
    x: &SpdPoint,
    k: usize,
    datum: &MorseDatum,
    theta_prime: &ThetaSpec,
    straight: &StraightParams,
    model: &ModelConfig,
    calib: &Calibration,
) -> Result<WordReport> {
    if k == 0 {
        return Err(MorseError::Invalid("word length must be at least 1".into()));
    }
    let gens = pair.generators(m, n);
    let words: Vec<Word> = reduced_words(2, k, u128::MAX)?;
    let results = words
        .par_iter()
        .map(|w| {
            let path = word_path(&gens, w, x)?;
            let straight = if path.len() >= 3 {
                Some(is_straight_spaced(&midpoint_sequence(&path, 1)?, straight)?)
            } else {
                None
            };
            let morse = morse_check(&path, datum, theta_prime, model, calib)?;
            let fitted_l = fit_multiplicative(&path, datum.a)?;
            Ok(WordResult { straight, morse, fitted_l })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut r = WordReport {
        length: k,
        words: words.len(),
        passes: true,
        straight_words: 0,
        morse_words: 0,
        failing_word: None,
        failure: None,
        worst_angle_gap: None,
        worst_spacing_gap: None,
        worst_regularity_margin: None,
        fitted_l: 1.0,
        min_slope: f64::INFINITY,
        max_diamond_bound: None,
        datum: datum.clone(),
    };
    for (w, res) in words.iter().zip(&results) {
        let straight_ok = res.straight.as_ref().is_none_or(|s| s.straight);
        if let Some(s) = &res.straight {
            r.worst_angle_gap = min_opt(r.worst_angle_gap, s.worst_angle_gap);
            r.worst_spacing_gap = min_opt(r.worst_spacing_gap, s.worst_spacing_gap);
            r.worst_regularity_margin = min_opt(r.worst_regularity_margin, s.worst_regularity_margin);
        }
        r.straight_words += usize::from(straight_ok);
        r.morse_words += usize::from(res.morse.certified);
        r.fitted_l = r.fitted_l.max(res.fitted_l);
        if let Some(q) = &res.morse.diagnostics.quasigeodesic {
            r.min_slope = r.min_slope.min(q.min_slope);
        }
        if let Some(b) = res.morse.diagnostics.max_diamond_bound {
            r.max_diamond_bound = Some(r.max_diamond_bound.map_or(b, |c: f64| c.max(b)));
        }
        if r.failing_word.is_none() && !(straight_ok && res.morse.certified) {
            r.failing_word = Some(word_string(w));
            r.failure = Some(if straight_ok { "morse" } else { "straightness" }.into());
        }
    }
    r.passes = r.failing_word.is_none();
    Ok(r)
}

/// Settings of the Schottky pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchottkyConfig {
    /// Recognizer stage `i`: straightness uses `Θ_i` and diamonds `Θ_{i+1}`.
    pub stage: usize,
    pub budget: usize,
    pub mode: PowerMode,
    pub word_length: usize,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

impl Default for SchottkyConfig {
    fn default() -> Self {
        SchottkyConfig {
            stage: 3,
            budget: 64,
            mode: PowerMode::Symmetric,
            word_length: 8,
            d: 1.0,
            a: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchottkyCertificate {
    pub certified: bool,
    pub alpha: crate::symspace::MatrixJson,
    pub beta: crate::symspace::MatrixJson,
    pub basepoint: crate::symspace::MatrixJson,
    pub pattern: Vec<usize>,
    pub m: usize,
    pub n: usize,
    pub stage: usize,
    pub theta: ThetaSpec,
    pub theta_prime: ThetaSpec,
    pub epsilon: f64,
    pub spacing: f64,
    pub genericity_margins: [f64; 6],
    /// Reported only; no threshold is imposed on it.
    pub interiority_margin: f64,
    pub quadruple: QuadrupleReport,
    pub words: WordReport,
    pub calibration_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchottkyOutcome {
    Certificate(Box<SchottkyCertificate>, PowerSearch),
    Exhausted(PowerSearch),
}

/// Straightness thresholds of stage `i` from the calibration table.
pub fn stage_params(model: &ModelConfig, calib: &Calibration, stage: usize) -> Result<QuadrupleParams> {
    let entry = calib.stage(model.n, &model.pattern, stage)?;
    Ok(QuadrupleParams {
        theta: ThetaSpec::stage(model.n, &model.pattern, stage)?,
        epsilon: entry.epsilon,
        spacing: entry.spacing,
        zeta: model.zeta.clone(),
        eigengap: model.tol.eigengap,
    })
}

/// Genericity, power search and word verification. A non-generic pair is an error.
pub fn certify_schottky(
    alpha: &Isometry,
    beta: &Isometry,
    x: &SpdPoint,
    cfg: &SchottkyConfig,
    model: &ModelConfig,
    calib: &Calibration,
) -> Result<SchottkyOutcome> {
    let pair = generic_pair(alpha, beta, model)?;
    let qp = stage_params(model, calib, cfg.stage)?;
    let search = search_powers(&pair, x, &qp, cfg.budget, cfg.mode)?;
    let Some((m, n)) = search.found else {
        return Ok(SchottkyOutcome::Exhausted(search));
    };
    let cert = certify_powers(&pair, m, n, x, cfg, model, calib)?;
    Ok(SchottkyOutcome::Certificate(Box::new(cert), search))
}

/// Quadruple test and word verification at fixed powers.
pub fn certify_powers(
    pair: &AxialPair,
    m: usize,
    n: usize,
    x: &SpdPoint,
    cfg: &SchottkyConfig,
    model: &ModelConfig,
    calib: &Calibration,
) -> Result<SchottkyCertificate> {
    let qp = stage_params(model, calib, cfg.stage)?;
    let theta_prime = ThetaSpec::stage(model.n, &model.pattern, cfg.stage + 1)?;
    let quadruple = quadruple_test(&midpoint_quadruple(pair, m, n, x)?, x, &qp)?;
    let (fitted, _) = fit_words(pair, m, n, x, cfg.word_length, cfg.a)?;
    // Round-off headroom so the fitted constant itself passes.
    let datum = MorseDatum::new(qp.theta.clone(), cfg.d, fitted * (1.0 + 1e-9), cfg.a)?;
    let straight = StraightParams {
        theta: qp.theta.clone(),
        epsilon: qp.epsilon,
        spacing: qp.spacing,
        zeta: qp.zeta.clone(),
        eigengap: qp.eigengap,
    };
    let words = verify_words(pair, m, n, x, cfg.word_length, &datum, &theta_prime, &straight, model, calib)?;
    Ok(SchottkyCertificate {
        certified: quadruple.passes && words.passes,
        alpha: pair.alpha.to_json(),
        beta: pair.beta.to_json(),
        basepoint: x.to_json(),
        pattern: model.pattern.clone(),
        m,
        n,
        stage: cfg.stage,
        interiority_margin: pair.interiority_margin(&qp.theta),
        theta: qp.theta,
        theta_prime,
        epsilon: qp.epsilon,
        spacing: qp.spacing,
        genericity_margins: pair.margins,
        quadruple,
        words,
        calibration_id: calib.id.clone(),
    })
}
