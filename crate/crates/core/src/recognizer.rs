//! Stagewise recognition of Morse actions of free groups.
//!
//! Stage `i` enumerates the word paths of length `3S_i` starting at the identity and
//! checks the `(Θ_i, ε_i, l_i, S_i)`-quadruple condition on their orbit paths. When
//! every path passes, the promoted datum from the local-to-global table is re-verified
//! by the global Morse check on longer word paths before anything is certified.
//!
//! Paths are normalized by `q(0) = 1`: a geodesic segment through the identity at any
//! other position is a left translate of one of these, and the orbit check is
//! equivariant, so the marking is fixed at offset 0.

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Calibration, DatumKey};
use crate::error::{MorseError, Result};
use crate::morsecheck::{fit_multiplicative, morse_check, Certificate, CertificateKind, MorseDatum};
use crate::paths::DiscretePath;
use crate::sampling;
use crate::straightness::{quadruple_condition, QuadrupleMode, StraightParams, StraightnessReport};
use crate::symspace::{Isometry, MatrixJson, ModelConfig, SpdPoint, ThetaSpec};
use crate::words::{count_reduced, reduced_words, word_string, Word};

/// Images of the free generators and the orbit base point.
#[derive(Debug, Clone)]
pub struct Representation {
    pub generators: Vec<Isometry>,
    pub basepoint: SpdPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationJson {
    pub rank: usize,
    pub generators: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basepoint: Option<MatrixJson>,
}

impl Representation {
    pub fn new(generators: Vec<Isometry>, basepoint: SpdPoint) -> Result<Self> {
        let rep = Representation { generators, basepoint };
        rep.validate()?;
        Ok(rep)
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn dim(&self) -> usize {
        self.basepoint.dim()
    }

    /// Checks dimensions and spot-checks `g g⁻¹ = 1` for every generator.
    pub fn validate(&self) -> Result<()> {
        if self.generators.is_empty() {
            return Err(MorseError::Invalid("a representation needs at least one generator".into()));
        }
        let n = self.dim();
        for g in &self.generators {
            if g.dim() != n {
                return Err(MorseError::Dimension { expected: n, got: g.dim() });
            }
            let e = g.matrix() * g.inverse_matrix() - crate::linalg::Mat::identity(n, n);
            let scale = g.matrix().norm() * g.inverse_matrix().norm();
            if e.norm() > 1e-8 * scale {
                return Err(MorseError::SingularIsometry(format!("inverse residual {:.3e}", e.norm())));
            }
        }
        Ok(())
    }

    /// Letter `2j` is `g_j`, letter `2j + 1` is `g_j⁻¹`.
    pub fn letters(&self) -> Vec<Isometry> {
        self.generators.iter().flat_map(|g| [g.clone(), g.inverse()]).collect()
    }

    pub fn word_path(&self, word: &[u8]) -> Result<DiscretePath> {
        let letters = self.letters();
        let steps: Vec<Isometry> = word.iter().map(|&c| letters[c as usize].clone()).collect();
        DiscretePath::orbit(0, &self.basepoint, &steps)
    }

    /// Generators moved entrywise by independent `U[−delta, delta]` noise, then
    /// renormalized into the group. The base point is kept.
    pub fn perturbed(&self, delta: f64, seed: u64) -> Result<Representation> {
        let mut rng = sampling::rng(seed);
        let generators = self
            .generators
            .iter()
            .map(|g| {
                let n = g.dim();
                let noise = crate::linalg::Mat::from_fn(n, n, |_, _| delta * rng.random_range(-1.0..=1.0));
                Isometry::normalized(g.matrix() + noise)
            })
            .collect::<Result<Vec<_>>>()?;
        Representation::new(generators, self.basepoint.clone())
    }

    /// Conjugate representation `g ρ g⁻¹` with base point `g x`.
    pub fn conjugate(&self, g: &Isometry) -> Representation {
        Representation {
            generators: self.generators.iter().map(|s| s.conjugate_by(g)).collect(),
            basepoint: self.basepoint.transform(g),
        }
    }

    pub fn to_json(&self) -> RepresentationJson {
        RepresentationJson {
            rank: self.rank(),
            generators: self.generators.iter().map(|g| g.to_json()).collect(),
            basepoint: Some(self.basepoint.to_json()),
        }
    }

    /// Generators are renormalized to determinant one; the base point defaults to `I`.
    pub fn from_json(j: &RepresentationJson) -> Result<Self> {
        if j.rank != j.generators.len() {
            return Err(MorseError::Parse(format!("rank {} but {} generators", j.rank, j.generators.len())));
        }
        let generators = j
            .generators
            .iter()
            .map(|m| Isometry::normalized(m.to_mat()?))
            .collect::<Result<Vec<_>>>()?;
        let n = generators.first().map_or(0, |g| g.dim());
        let basepoint = match &j.basepoint {
            Some(b) => SpdPoint::from_json(b)?,
            None => SpdPoint::identity(n),
        };
        Representation::new(generators, basepoint)
    }
}

/// `Θ_i`: lower bound `1/i` on every simple root of the face.
pub fn theta_stage(n: usize, pattern: &[usize], i: usize) -> Result<ThetaSpec> {
    ThetaSpec::stage(n, pattern, i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub stage: usize,
    pub theta: ThetaSpec,
    pub epsilon: f64,
    pub spacing: f64,
    /// Nondecreasing in the stage.
    pub scale: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub n: usize,
    pub pattern: Vec<usize>,
    pub stages: Vec<StageSpec>,
    /// Stages without a calibration row, typically because `Θ_i` contains no unit vector.
    pub skipped: Vec<usize>,
}

impl StageSchedule {
    /// Stages `1..=max_stage` from the calibration table, with `S_i = max(S_{i-1}, s_i)`.
    pub fn from_calibration(model: &ModelConfig, calib: &Calibration, max_stage: usize) -> Result<Self> {
        let mut stages = Vec::new();
        let mut skipped = Vec::new();
        let mut scale = 1;
        for i in 1..=max_stage {
            match calib.stage(model.n, &model.pattern, i) {
                Ok(e) => {
                    scale = scale.max(e.scale.max(1));
                    stages.push(StageSpec {
                        stage: i,
                        theta: theta_stage(model.n, &model.pattern, i)?,
                        epsilon: e.epsilon,
                        spacing: e.spacing,
                        scale,
                    });
                }
                Err(MorseError::CalibrationMissing(_)) => skipped.push(i),
                Err(e) => return Err(e),
            }
        }
        Ok(StageSchedule {
            n: model.n,
            pattern: model.pattern.clone(),
            stages,
            skipped,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.stages.windows(2) {
            if w[1].stage <= w[0].stage || w[1].scale < w[0].scale || !w[0].theta.is_subset_of(&w[1].theta) {
                return Err(MorseError::Config(format!(
                    "stages {} and {} are not nested with nondecreasing scale",
                    w[0].stage, w[1].stage
                )));
            }
        }
        Ok(())
    }
}

/// Word paths `q: [0, 3S] → Γ` with `q(0) = 1`, one per reduced word of length `3S`.
pub fn enumerate_paths(rank: usize, scale: usize, limit: u128) -> Result<Vec<Word>> {
    if scale == 0 {
        return Err(MorseError::Invalid("scale must be at least 1".into()));
    }
    reduced_words(rank, 3 * scale, limit)
}

/// Settings that are not part of the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognizerConfig {
    /// Largest number of word paths enumerated at one stage.
    pub path_limit: u64,
    /// Promotion is re-verified on words of length `max(3S_i, verify_length)`.
    pub verify_length: usize,
    pub quadruple_mode: QuadrupleMode,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            path_limit: 200_000,
            verify_length: 6,
            quadruple_mode: QuadrupleMode::Grid,
        }
    }
}

/// Promoted datum and its direct re-verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promotion {
    pub datum: MorseDatum,
    pub theta_check: ThetaSpec,
    pub word_length: usize,
    pub verified_paths: usize,
    pub passing_paths: usize,
    /// Every quadruple passed but the promoted datum failed the direct check.
    pub contradiction: bool,
    pub failing_word: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: usize,
    pub scale: usize,
    pub epsilon: f64,
    pub spacing: f64,
    pub paths: usize,
    pub passing: usize,
    /// Paths whose check raised an error (for instance coincident points); they fail.
    pub errors: usize,
    pub worst_angle_gap: Option<f64>,
    pub worst_spacing_gap: Option<f64>,
    pub worst_regularity_margin: Option<f64>,
    pub failing_word: Option<String>,
    pub promotion: Option<Promotion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecognitionStatus {
    Certified { stage: usize, certificate: Box<Certificate> },
    BudgetExhausted { best_stage: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionOutcome {
    pub status: RecognitionStatus,
    pub paths_checked: usize,
    pub stages: Vec<StageSummary>,
    pub skipped_stages: Vec<usize>,
    pub calibration_id: String,
    /// Not serialized, so outcomes stay byte-identical across reruns.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RecognitionOutcome {
    pub fn certified_stage(&self) -> Option<usize> {
        match &self.status {
            RecognitionStatus::Certified { stage, .. } => Some(*stage),
            RecognitionStatus::BudgetExhausted { .. } => None,
        }
    }

    /// One row per checked stage.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let mut out = String::from("stage,scale,paths,passing,errors,worst_angle_gap,worst_spacing_gap,worst_regularity_margin\n");
        for s in &self.stages {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.stage,
                s.scale,
                s.paths,
                s.passing,
                s.errors,
                cell(s.worst_angle_gap),
                cell(s.worst_spacing_gap),
                cell(s.worst_regularity_margin)
            ));
        }
        out
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn check_model(rep: &Representation, model: &ModelConfig) -> Result<()> {
    rep.validate()?;
    if rep.dim() != model.n {
        return Err(MorseError::Dimension {
            expected: model.n,
            got: rep.dim(),
        });
    }
    Ok(())
}

/// Quadruple condition on every word path of the stage.
pub fn check_stage(rep: &Representation, spec: &StageSpec, model: &ModelConfig, cfg: &RecognizerConfig) -> Result<StageSummary> {
    check_model(rep, model)?;
    let words = enumerate_paths(rep.rank(), spec.scale, cfg.path_limit as u128)?;
    let params = StraightParams {
        theta: spec.theta.clone(),
        epsilon: spec.epsilon,
        spacing: spec.spacing,
        zeta: model.zeta.clone(),
        eigengap: model.tol.eigengap,
    };
    let reports: Vec<Result<StraightnessReport>> = words
        .par_iter()
        .map(|w| quadruple_condition(&rep.word_path(w)?, &params, spec.scale, cfg.quadruple_mode))
        .collect();
    let mut s = StageSummary {
        stage: spec.stage,
        scale: spec.scale,
        epsilon: spec.epsilon,
        spacing: spec.spacing,
        paths: words.len(),
        passing: 0,
        errors: 0,
        worst_angle_gap: None,
        worst_spacing_gap: None,
        worst_regularity_margin: None,
        failing_word: None,
        promotion: None,
    };
    for (w, r) in words.iter().zip(&reports) {
        let ok = match r {
            Ok(r) => {
                s.worst_angle_gap = min_opt(s.worst_angle_gap, r.worst_angle_gap);
                s.worst_spacing_gap = min_opt(s.worst_spacing_gap, r.worst_spacing_gap);
                s.worst_regularity_margin = min_opt(s.worst_regularity_margin, r.worst_regularity_margin);
                r.straight
            }
            Err(_) => {
                s.errors += 1;
                false
            }
        };
        if ok {
            s.passing += 1;
        } else if s.failing_word.is_none() {
            s.failing_word = Some(word_string(w));
        }
    }
    Ok(s)
}

/// Datum `(Θ_{i+1}, D′, L, A′)` with `D′, A′` from the local-to-global table for the
/// stage datum `(Θ_i, D_i = i, L_i = i, A = 0)` and `L` fitted on the verification words.
fn promoted_datum(
    rep: &Representation,
    spec: &StageSpec,
    model: &ModelConfig,
    calib: &Calibration,
    cfg: &RecognizerConfig,
) -> Result<(MorseDatum, ThetaSpec, Vec<Word>)> {
    let i = spec.stage;
    let theta_prime = theta_stage(model.n, &model.pattern, i + 1)?;
    let key = DatumKey {
        d: i as f64,
        l: i as f64,
        a: 0.0,
    };
    let entry = calib.local_to_global(&spec.theta, &theta_prime, key)?;
    let len = cfg.verify_length.max(3 * spec.scale);
    let words = reduced_words(rep.rank(), len, cfg.path_limit as u128)?;
    let fits = words
        .par_iter()
        .map(|w| fit_multiplicative(&rep.word_path(w)?, entry.a_prime))
        .collect::<Result<Vec<f64>>>()?;
    let l = fits.iter().cloned().fold(1.0, f64::max) * (1.0 + 1e-9);
    let datum = MorseDatum::new(theta_prime, entry.d_prime, l, entry.a_prime)?;
    Ok((datum, entry.theta_check.clone(), words))
}

/// Morse check of every verification word at `datum`; returns the promotion record and
/// a certificate merged over all words.
fn verify_datum(
    rep: &Representation,
    datum: &MorseDatum,
    theta_check: &ThetaSpec,
    words: &[Word],
    model: &ModelConfig,
    calib: &Calibration,
) -> Result<(Promotion, Certificate)> {
    let certs = words
        .par_iter()
        .map(|w| morse_check(&rep.word_path(w)?, datum, theta_check, model, calib))
        .collect::<Result<Vec<Certificate>>>()?;
    let passing = certs.iter().filter(|c| c.certified).count();
    let failing = certs.iter().position(|c| !c.certified);
    // Report the diagnostics of the first failure, else of the path with the largest bound.
    let pick = failing.unwrap_or_else(|| {
        let key = |c: &Certificate| c.diagnostics.max_diamond_bound.unwrap_or(f64::NEG_INFINITY);
        (0..certs.len()).fold(0, |best, k| if key(&certs[k]) > key(&certs[best]) { k } else { best })
    });
    let mut cert = certs[pick].clone();
    cert.diagnostics.checked_pairs = certs.iter().map(|c| c.diagnostics.checked_pairs).sum();
    cert.diagnostics.exempt_pairs = certs.iter().map(|c| c.diagnostics.exempt_pairs).sum();
    cert.diagnostics.checked_points = certs.iter().map(|c| c.diagnostics.checked_points).sum();
    cert.diagnostics.searched_points = certs.iter().map(|c| c.diagnostics.searched_points).sum();
    cert.diagnostics.irregular_pairs = certs.iter().map(|c| c.diagnostics.irregular_pairs).sum();
    cert.diagnostics.unbounded_points = certs.iter().map(|c| c.diagnostics.unbounded_points).sum();
    cert.kind = CertificateKind::Recognized;
    cert.certified = failing.is_none();
    let promotion = Promotion {
        datum: datum.clone(),
        theta_check: theta_check.clone(),
        word_length: words.first().map_or(0, |w| w.len()),
        verified_paths: certs.len(),
        passing_paths: passing,
        contradiction: failing.is_some(),
        failing_word: failing.map(|k| word_string(&words[k])),
    };
    Ok((promotion, cert))
}

/// Runs stages `1..=budget` of the schedule. Stops at the first stage whose word paths
/// all pass and whose promoted datum survives the direct check.
pub fn recognize(
    rep: &Representation,
    schedule: &StageSchedule,
    budget: usize,
    model: &ModelConfig,
    calib: &Calibration,
    cfg: &RecognizerConfig,
) -> Result<RecognitionOutcome> {
    let start = Instant::now();
    check_model(rep, model)?;
    schedule.validate()?;
    if budget == 0 {
        return Err(MorseError::Invalid("stage budget must be at least 1".into()));
    }
    if schedule.n != model.n || schedule.pattern != model.pattern {
        return Err(MorseError::Config("schedule was built for a different model".into()));
    }
    let mut out = RecognitionOutcome {
        status: RecognitionStatus::BudgetExhausted { best_stage: None },
        paths_checked: 0,
        stages: Vec::new(),
        skipped_stages: schedule.skipped.iter().copied().filter(|&i| i <= budget).collect(),
        calibration_id: calib.id.clone(),
        wall_time: Duration::ZERO,
    };
    for spec in schedule.stages.iter().filter(|s| s.stage <= budget) {
        let mut summary = check_stage(rep, spec, model, cfg)?;
        out.paths_checked += summary.paths;
        if summary.passing == summary.paths {
            let (datum, theta_check, words) = promoted_datum(rep, spec, model, calib, cfg)?;
            let (promotion, mut cert) = verify_datum(rep, &datum, &theta_check, &words, model, calib)?;
            cert.scale = Some(spec.stage);
            let certified = cert.certified;
            summary.promotion = Some(promotion);
            out.stages.push(summary);
            if certified {
                out.status = RecognitionStatus::Certified {
                    stage: spec.stage,
                    certificate: Box::new(cert),
                };
                out.wall_time = start.elapsed();
                return Ok(out);
            }
            continue;
        }
        out.stages.push(summary);
    }
    let best = out
        .stages
        .iter()
        .fold(None::<&StageSummary>, |b, s| match b {
            Some(b) if b.passing * s.paths.max(1) >= s.passing * b.paths.max(1) => Some(b),
            _ => Some(s),
        })
        .map(|s| s.stage);
    out.status = RecognitionStatus::BudgetExhausted { best_stage: best };
    out.wall_time = start.elapsed();
    Ok(out)
}

/// Outcome of re-checking a perturbed representation at its certified stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub delta: f64,
    pub seed: u64,
    /// The relaxed datum passes the direct check on every verification word.
    pub passes: bool,
    pub quadruples_pass: bool,
    pub relaxed_datum: MorseDatum,
    pub failing_word: Option<String>,
    /// Perturbed minus original worst margins.
    pub angle_gap_delta: Option<f64>,
    pub spacing_gap_delta: Option<f64>,
    pub regularity_margin_delta: Option<f64>,
}

/// Perturbs every generator entrywise by at most `delta`, renormalizes into the group and
/// re-checks the certified stage: quadruple margins, and the promoted datum relaxed by
/// `M + datum_relax` against the direct Morse check.
#[allow(clippy::too_many_arguments)]
pub fn perturb_and_recheck(
    rep: &Representation,
    outcome: &RecognitionOutcome,
    schedule: &StageSchedule,
    delta: f64,
    datum_relax: f64,
    seed: u64,
    model: &ModelConfig,
    calib: &Calibration,
    cfg: &RecognizerConfig,
) -> Result<PerturbationReport> {
    let RecognitionStatus::Certified { stage, certificate } = &outcome.status else {
        return Err(MorseError::Invalid("representation was not certified".into()));
    };
    if !(delta >= 0.0 && datum_relax >= 0.0) {
        return Err(MorseError::Invalid("perturbation size and relaxation must be nonnegative".into()));
    }
    let spec = schedule
        .stages
        .iter()
        .find(|s| s.stage == *stage)
        .ok_or_else(|| MorseError::Config(format!("stage {stage} is not in the schedule")))?;
    let original = outcome
        .stages
        .iter()
        .find(|s| s.stage == *stage)
        .ok_or_else(|| MorseError::Invalid(format!("outcome has no summary for stage {stage}")))?;
    let perturbed = rep.perturbed(delta, seed)?;
    let summary = check_stage(&perturbed, spec, model, cfg)?;
    let relaxed = certificate.datum.plus(datum_relax);
    let len = cfg.verify_length.max(3 * spec.scale);
    let words = reduced_words(rep.rank(), len, cfg.path_limit as u128)?;
    let (promotion, _) = verify_datum(&perturbed, &relaxed, &certificate.theta_prime, &words, model, calib)?;
    let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
    Ok(PerturbationReport {
        delta,
        seed,
        passes: !promotion.contradiction,
        quadruples_pass: summary.passing == summary.paths,
        relaxed_datum: relaxed,
        failing_word: promotion.failing_word,
        angle_gap_delta: diff(summary.worst_angle_gap, original.worst_angle_gap),
        spacing_gap_delta: diff(summary.worst_spacing_gap, original.worst_spacing_gap),
        regularity_margin_delta: diff(summary.worst_regularity_margin, original.worst_regularity_margin),
    })
}

/// Count of word paths at scale `S`, for reporting before enumeration.
pub fn path_count(rank: usize, scale: usize) -> u128 {
    count_reduced(rank, 3 * scale)
}
