//! Sweeps over synthetic families that produce a calibration file.

use serde::{Deserialize, Serialize};

use super::{CalibrationFile, DatumKey, LocalToGlobalEntry, MorseEntry, StageEntry, StraightnessEntry, FORMAT_VERSION};
use crate::error::Result;
use crate::morsecheck::{fit_multiplicative, local_morse_check, measure_diamond_bound, MorseDatum};
use crate::paths::{DiscretePath, PointSequence};
use crate::sampling::{self, direction_in, flat_march, FlatMarch, SeededRng};
use crate::straightness::{is_straight_spaced, morse_lemma_conclusion, ConclusionTolerances, StraightParams};
use crate::symspace::{decompose, regularity_of, ModelConfig, ThetaSpec};

use rand::Rng;

/// One model and the recognizer stages to calibrate for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSweep {
    pub n: usize,
    pub pattern: Vec<usize>,
    pub stages: Vec<usize>,
}

/// Parameters of a calibration sweep. An empty model list yields an empty table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub seed: u64,
    pub models: Vec<ModelSweep>,
    pub delta: f64,
    /// Synthetic sequences per straightness cell.
    pub sequences: usize,
    /// A candidate `(ε, l)` needs at least this many passing sequences.
    pub min_passing: usize,
    pub epsilon_grid: Vec<f64>,
    pub spacing_grid: Vec<f64>,
    /// Chosen `ε` is multiplied by this and `l` divided by it.
    pub safety: f64,
    pub anchor_factor: f64,
    pub slack: f64,
    pub threshold_base: f64,
    /// Random segments used to fit the separation threshold.
    pub segments: usize,
    /// `D` and `A` coverage of the emitted Morse entries. The threshold ignores `A`.
    pub morse_max_d: f64,
    pub morse_max_a: f64,
    /// Datum coverage of the emitted local-to-global entries; stage `i` covers `D ≤ max(max_d, i)`.
    pub max_d: f64,
    pub max_l: f64,
    pub max_a: f64,
    /// Densified marches used to fit the local-to-global constants.
    pub paths: usize,
    /// Largest recognizer scale.
    pub scale_cap: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            seed: 1,
            models: Vec::new(),
            delta: 1.0,
            sequences: 160,
            min_passing: 10,
            epsilon_grid: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.4],
            spacing_grid: vec![0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0],
            safety: 0.8,
            anchor_factor: 3.0,
            slack: 1e-6,
            threshold_base: 1.0,
            segments: 400,
            morse_max_d: 64.0,
            morse_max_a: 64.0,
            max_d: 2.0,
            max_l: 1e6,
            max_a: 4.0,
            paths: 24,
            scale_cap: 2,
        }
    }
}

impl SweepConfig {
    /// The sweep that produced the shipped table: `SL(3)` with the full flag and `SL(2)`.
    pub fn standard() -> Self {
        let stages: Vec<usize> = (1..=11).collect();
        SweepConfig {
            models: vec![
                ModelSweep {
                    n: 3,
                    pattern: vec![1, 2],
                    stages: stages.clone(),
                },
                ModelSweep {
                    n: 2,
                    pattern: vec![1],
                    stages,
                },
            ],
            ..SweepConfig::default()
        }
    }
}

fn cell_rng(seed: u64, n: usize, pattern: &[usize], stage: usize, salt: u64) -> SeededRng {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [n as u64, stage as u64, salt].into_iter().chain(pattern.iter().map(|&p| p as u64 + 100)) {
        h = h.rotate_left(17).wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ v;
    }
    sampling::rng(h)
}

fn random_march(rng: &mut SeededRng, theta: &ThetaSpec, delta: f64) -> Option<PointSequence> {
    let direction = direction_in(rng, theta, 10_000)?;
    let lo = rng.random_range(0.3..6.0);
    let hi = lo * rng.random_range(1.0..2.0);
    let m = FlatMarch {
        direction,
        step_range: (lo, hi),
        spread: 0.3 * rng.random::<f64>(),
        jitter: delta * rng.random::<f64>(),
        turn: 0.8 * rng.random::<f64>(),
        len: rng.random_range(6..=12),
    };
    Some(flat_march(rng, &m))
}

/// Worst interior angle, shortest step and worst regularity margin of a sequence.
struct SeqStats {
    min_angle: f64,
    min_len: f64,
    margin: f64,
}

impl SeqStats {
    fn passes(&self, epsilon: f64, spacing: f64) -> bool {
        self.margin >= 0.0 && self.min_angle >= std::f64::consts::PI - epsilon && self.min_len >= spacing
    }
}

fn seq_stats(seq: &PointSequence, theta: &ThetaSpec, model: &ModelConfig) -> Option<SeqStats> {
    let p = StraightParams {
        theta: theta.clone(),
        epsilon: std::f64::consts::PI,
        spacing: 0.0,
        zeta: model.zeta.clone(),
        eigengap: model.tol.eigengap,
    };
    let r = is_straight_spaced(seq, &p).ok()?;
    Some(SeqStats {
        min_angle: r.worst_angle_gap.unwrap_or(std::f64::consts::PI),
        min_len: r.worst_spacing_gap?,
        margin: r.worst_regularity_margin?,
    })
}

pub(crate) fn conclusion_tolerances(model: &ModelConfig) -> ConclusionTolerances {
    ConclusionTolerances {
        eigengap: model.tol.eigengap,
        flag: 1e-6,
        projection: 1e-9,
    }
}

/// Loosest grid point `(ε, l)` for which every passing sequence satisfies the conclusion.
fn straightness_cell(
    cfg: &SweepConfig,
    model: &ModelConfig,
    theta: &ThetaSpec,
    theta_prime: &ThetaSpec,
    rng: &mut SeededRng,
) -> Option<StraightnessEntry> {
    let seqs: Vec<PointSequence> = (0..cfg.sequences).map_while(|_| random_march(rng, theta, cfg.delta)).collect();
    if seqs.is_empty() {
        return None;
    }
    let eps_max = cfg.epsilon_grid.iter().cloned().fold(0.0, f64::max);
    let l_min = cfg.spacing_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = conclusion_tolerances(model);
    let evaluated: Vec<(SeqStats, bool)> = seqs
        .iter()
        .filter_map(|s| {
            let st = seq_stats(s, theta, model)?;
            if !st.passes(eps_max, l_min) {
                return None;
            }
            let holds = morse_lemma_conclusion(s, theta_prime, cfg.delta, l_min, tol).is_ok_and(|r| r.holds);
            Some((st, holds))
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for &eps in &cfg.epsilon_grid {
        for &l in &cfg.spacing_grid {
            let passing: Vec<bool> = evaluated.iter().filter(|(s, _)| s.passes(eps, l)).map(|(_, h)| *h).collect();
            if passing.len() < cfg.min_passing || passing.iter().any(|h| !h) {
                continue;
            }
            let better = match best {
                None => true,
                Some((be, bl)) => eps > be || (eps == be && l < bl),
            };
            if better {
                best = Some((eps, l));
            }
        }
    }
    let (eps, l) = best?;
    Some(StraightnessEntry {
        theta: theta.clone(),
        theta_prime: theta_prime.clone(),
        delta: cfg.delta,
        epsilon: eps * cfg.safety,
        spacing: l / cfg.safety,
    })
}

/// Fits the separation threshold: the worst observed drop of the Θ margin per unit of
/// endpoint displacement, relative to segment length.
fn morse_cell(
    cfg: &SweepConfig,
    model: &ModelConfig,
    theta: &ThetaSpec,
    theta_prime: &ThetaSpec,
    rng: &mut SeededRng,
) -> Option<MorseEntry> {
    let n = model.n;
    let gap = theta
        .bounds
        .iter()
        .zip(&theta_prime.bounds)
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    if !(gap > 0.0) {
        return None;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.segments {
        let dir = direction_in(rng, theta, 10_000)?;
        let len = rng.random_range(1.0..30.0);
        let logs: Vec<f64> = dir.iter().map(|d| d * len).collect();
        let g = sampling::isometry(rng, n, 2.0);
        let x = crate::symspace::SpdPoint::identity(n).transform(&g);
        let y = crate::symspace::SpdPoint::diagonal_exp(&logs).transform(&g);
        let (r1, r2) = (rng.random::<f64>(), rng.random::<f64>());
        let xp = sampling::perturb(rng, &x, r1);
        let yp = sampling::perturb(rng, &y, r2);
        let moved = crate::symspace::riem_distance(&x, &xp).ok()? + crate::symspace::riem_distance(&y, &yp).ok()?;
        if moved < 1e-9 {
            continue;
        }
        let before = regularity_of(&decompose(&crate::symspace::transporter(&x, &y)).cartan(), theta, 0.0).ok()?;
        let after = match regularity_of(&decompose(&crate::symspace::transporter(&xp, &yp)).cartan(), theta, 0.0) {
            Ok(r) => r.margin,
            Err(_) => f64::NEG_INFINITY,
        };
        worst = worst.max((before.margin - after) * len / moved);
    }
    Some(MorseEntry {
        theta: theta.clone(),
        theta_prime: theta_prime.clone(),
        max_d: cfg.morse_max_d,
        max_l: cfg.max_l,
        max_a: cfg.morse_max_a,
        threshold_base: cfg.threshold_base,
        threshold_slope: 2.0 * worst / (gap * cfg.safety),
        anchor_factor: cfg.anchor_factor,
        slack: cfg.slack,
    })
}

/// Fits the promoted datum on densified marches that pass the local check.
#[allow(clippy::too_many_arguments)]
fn local_to_global_cell(
    cfg: &SweepConfig,
    model: &ModelConfig,
    theta: &ThetaSpec,
    theta_prime: &ThetaSpec,
    theta_check: &ThetaSpec,
    scale: usize,
    local_d: f64,
    calib: &super::Calibration,
    rng: &mut SeededRng,
) -> Option<LocalToGlobalEntry> {
    let local_l = 2.0;
    let m = MorseDatum::new(theta.clone(), local_d, local_l, cfg.max_a).ok()?;
    let window = (3 * scale).max(2);
    let promoted_entry = calib.morse(theta_prime, theta_check, DatumKey { d: local_d, l: 1.0, a: cfg.max_a }).ok()?;
    let mut worst_bound: f64 = 0.0;
    let mut worst_l: f64 = 1.0;
    let mut used = 0;
    for _ in 0..cfg.paths {
        let direction = direction_in(rng, theta, 10_000)?;
        let lo = rng.random_range(1.0..4.0);
        let march = FlatMarch {
            direction,
            step_range: (lo, 2.0 * lo),
            spread: 0.1 * rng.random::<f64>(),
            jitter: 0.5 * cfg.delta * rng.random::<f64>(),
            turn: 0.2 * rng.random::<f64>(),
            len: rng.random_range(4..=7),
        };
        let seq = flat_march(rng, &march);
        let Ok(path) = DiscretePath::densify(0, &seq, 1.0) else { continue };
        let Ok(local) = local_morse_check(&path, &m, window, theta_prime, model, calib) else { continue };
        if !local.certified {
            continue;
        }
        used += 1;
        let threshold = promoted_entry.threshold(local_d);
        if let Some(b) = measure_diamond_bound(&path, theta_check, threshold, model) {
            worst_bound = worst_bound.max(b);
        }
        if let Ok(l) = fit_multiplicative(&path, cfg.max_a) {
            worst_l = worst_l.max(l);
        }
    }
    if used == 0 || !worst_bound.is_finite() {
        return None;
    }
    let d_prime = (worst_bound / promoted_entry.anchor_factor).max(local_d) / cfg.safety;
    Some(LocalToGlobalEntry {
        theta: theta.clone(),
        theta_prime: theta_prime.clone(),
        max_d: local_d,
        max_l: cfg.max_l,
        max_a: cfg.max_a,
        scale: window,
        d_prime: d_prime.min(promoted_entry.max_d),
        l_factor: (worst_l / local_l).max(1.0) / cfg.safety,
        a_prime: cfg.max_a,
        theta_check: theta_check.clone(),
    })
}

/// Runs the sweep. Cells where a family cannot be generated (for instance an empty
/// `Θ_i`) or no candidate qualifies are left out; the table is still valid.
pub fn calibrate(cfg: &SweepConfig) -> Result<CalibrationFile> {
    let mut file = CalibrationFile {
        version: FORMAT_VERSION,
        source: format!("sweep seed {} delta {} sequences {} safety {}", cfg.seed, cfg.delta, cfg.sequences, cfg.safety),
        ..CalibrationFile::default()
    };
    for ms in &cfg.models {
        let model = ModelConfig::new(ms.n, ms.pattern.clone())?;
        let th = |i: usize| ThetaSpec::stage(ms.n, &ms.pattern, i);
        let mut morse_stages: Vec<usize> = ms.stages.iter().flat_map(|&i| [i, i + 1]).collect();
        morse_stages.sort_unstable();
        morse_stages.dedup();
        for &i in &morse_stages {
            let mut rng = cell_rng(cfg.seed, ms.n, &ms.pattern, i, 1);
            if let Some(e) = morse_cell(cfg, &model, &th(i)?, &th(i + 1)?, &mut rng) {
                file.morse.push(e);
            }
        }
        for &i in &ms.stages {
            let mut rng = cell_rng(cfg.seed, ms.n, &ms.pattern, i, 2);
            let Some(e) = straightness_cell(cfg, &model, &th(i)?, &th(i + 1)?, &mut rng) else { continue };
            let scale = (e.spacing.ceil() as usize).clamp(1, cfg.scale_cap.max(1));
            file.stages.push(StageEntry {
                n: ms.n,
                pattern: ms.pattern.clone(),
                stage: i,
                epsilon: e.epsilon,
                spacing: e.spacing,
                scale,
            });
            file.straightness.push(e);
        }
        let partial = super::Calibration::new(file.clone())?;
        let stage_scales: Vec<(usize, usize)> = file
            .stages
            .iter()
            .filter(|s| s.n == ms.n && s.pattern == ms.pattern)
            .map(|s| (s.stage, s.scale))
            .collect();
        for (i, scale) in stage_scales {
            let mut rng = cell_rng(cfg.seed, ms.n, &ms.pattern, i, 3);
            if let Some(e) = local_to_global_cell(cfg, &model, &th(i)?, &th(i + 1)?, &th(i + 2)?, scale, cfg.max_d.max(i as f64), &partial, &mut rng) {
                file.local_to_global.push(e);
            }
        }
    }
    Ok(file)
}
