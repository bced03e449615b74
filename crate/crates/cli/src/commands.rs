//! Command bodies. Each command maps a config and a JSON input to an exit code, a JSON
//! result and optional CSV side files, so `replay` can rerun any recorded command.

use morse_core::calibration::{calibrate, ModelSweep, SweepConfig};
use morse_core::error::{MorseError, Result};
use morse_core::morsecheck::{certify_local_to_global, fit_multiplicative, morse_check, Certificate, MorseDatum};
use morse_core::paths::{DiscretePath, PathJson};
use morse_core::recognizer::{recognize, RecognitionOutcome, Representation, RepresentationJson, StageSchedule};
use morse_core::schottky::{certify_schottky, SchottkyOutcome};
use morse_core::symspace::{decompose, regularity_of, Isometry, MatrixJson, SpdPoint};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;

pub const CERTIFIED: i32 = 0;
pub const ERROR: i32 = 1;
pub const REJECTED: i32 = 2;
pub const NOT_GENERIC: i32 = 3;
pub const POWERS_EXHAUSTED: i32 = 4;
pub const STAGES_EXHAUSTED: i32 = 5;
pub const OVERFLOW: i32 = 6;

/// Everything needed to rerun a command and compare its result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: RunConfig,
    pub calibration_id: String,
    pub input: Value,
    pub exit_code: i32,
    pub result: Value,
}

pub struct Produced {
    pub code: i32,
    pub summary: String,
    pub result: Value,
    /// `(file name, contents)` written next to the record.
    pub side_files: Vec<(String, String)>,
}

/// Generator file of the `schottky` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorsJson {
    pub alpha: MatrixJson,
    pub beta: MatrixJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basepoint: Option<MatrixJson>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| MorseError::Parse(e.to_string()))
}

fn from_value<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| MorseError::Parse(e.to_string()))
}

pub fn record_name(command: &str) -> &'static str {
    match command {
        "certify-path" | "certify-local" => "certificate.json",
        "schottky" => "schottky.json",
        "recognize" => "outcome.json",
        _ => "run.json",
    }
}

pub fn execute(command: &str, cfg: &RunConfig, input: &Value) -> Result<Produced> {
    match command {
        "certify-path" => certify(cfg, input, false),
        "certify-local" => certify(cfg, input, true),
        "schottky" => schottky(cfg, input),
        "recognize" => recognize_cmd(cfg, input),
        other => Err(MorseError::Invalid(format!("command {other} cannot be replayed"))),
    }
}

/// Per-sample distance from the start and step regularity.
fn path_csv(path: &DiscretePath, cert: &Certificate) -> Result<String> {
    let mut out = String::from("t,distance_from_start,step_length,step_theta_margin\n");
    let mut acc = Isometry::identity(path.dim());
    let times = path.times();
    out.push_str(&format!("{},0,,\n", times[0]));
    for (k, s) in path.steps().iter().enumerate() {
        acc = acc.compose(s);
        let step = decompose(s).cartan();
        let reg = regularity_of(&step, &cert.datum.theta, cert.tolerances.eigengap)?;
        out.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            times[k + 1],
            decompose(&acc).cartan().norm(),
            step.norm(),
            reg.margin
        ));
    }
    Ok(out)
}

fn certify(cfg: &RunConfig, input: &Value, local: bool) -> Result<Produced> {
    let path = DiscretePath::from_json(&from_value::<PathJson>(input)?)?;
    let model = cfg.model()?;
    let calib = cfg.calibration()?;
    let (theta, theta_prime) = cfg.certify.thetas(&model)?;
    let l = match cfg.certify.l {
        Some(l) => l,
        None => fit_multiplicative(&path, cfg.certify.a)? * (1.0 + 1e-9),
    };
    let m = MorseDatum::new(theta, cfg.certify.d, l, cfg.certify.a)?;
    let cert = if local {
        certify_local_to_global(&path, &m, &theta_prime, &model, &calib)?
    } else {
        morse_check(&path, &m, &theta_prime, &model, &calib)?
    };
    let code = if cert.certified { CERTIFIED } else { REJECTED };
    let summary = format!(
        "{} ({:?}, D = {}, L = {}, A = {})",
        if cert.certified { "certified" } else { "rejected" },
        cert.kind,
        cert.datum.d,
        cert.datum.l,
        cert.datum.a
    );
    Ok(Produced {
        code,
        summary,
        result: to_value(&cert)?,
        side_files: vec![("margins.csv".into(), path_csv(&path, &cert)?)],
    })
}

fn schottky(cfg: &RunConfig, input: &Value) -> Result<Produced> {
    let g: GeneratorsJson = from_value(input)?;
    let alpha = Isometry::normalized(g.alpha.to_mat()?)?;
    let beta = Isometry::normalized(g.beta.to_mat()?)?;
    let x = match &g.basepoint {
        Some(b) => SpdPoint::from_json(b)?,
        None => SpdPoint::identity(alpha.dim()),
    };
    let model = cfg.model()?;
    let calib = cfg.calibration()?;
    let outcome = match certify_schottky(&alpha, &beta, &x, &cfg.schottky, &model, &calib) {
        Err(e @ (MorseError::ModulusTie { .. } | MorseError::NotAntipodal { .. } | MorseError::Degenerate { .. })) => {
            return Ok(Produced {
                code: NOT_GENERIC,
                summary: format!("not a generic pair: {e}"),
                result: json!({"status": "not_generic", "reason": e.to_string()}),
                side_files: vec![],
            });
        }
        other => other?,
    };
    Ok(match outcome {
        SchottkyOutcome::Exhausted(search) => Produced {
            code: POWERS_EXHAUSTED,
            summary: format!("no passing powers within budget {}", cfg.schottky.budget),
            side_files: vec![("powers.csv".into(), search.to_csv())],
            result: json!({"status": "exhausted", "search": to_value(&search)?}),
        },
        SchottkyOutcome::Certificate(c, search) => Produced {
            code: if c.certified { CERTIFIED } else { REJECTED },
            summary: format!(
                "{} at (m, n) = ({}, {}), {} words of length {}",
                if c.certified { "certified" } else { "word check failed" },
                c.m,
                c.n,
                c.words.words,
                c.words.length
            ),
            side_files: vec![("powers.csv".into(), search.to_csv())],
            result: json!({
                "status": if c.certified { "certified" } else { "rejected" },
                "certificate": to_value(&c)?,
                "search": to_value(&search)?,
            }),
        },
    })
}

fn recognize_cmd(cfg: &RunConfig, input: &Value) -> Result<Produced> {
    let rep = Representation::from_json(&from_value::<RepresentationJson>(input)?)?;
    let model = cfg.model()?;
    let calib = cfg.calibration()?;
    let rc = &cfg.recognize;
    let schedule = StageSchedule::from_calibration(&model, &calib, rc.stage_max)?;
    let out: RecognitionOutcome = match recognize(&rep, &schedule, rc.budget, &model, &calib, &rc.settings) {
        Err(e @ MorseError::EnumerationOverflow { .. }) => {
            return Ok(Produced {
                code: OVERFLOW,
                summary: format!("resource limit: {e}"),
                result: json!({"status": "overflow", "reason": e.to_string()}),
                side_files: vec![],
            });
        }
        other => other?,
    };
    let (code, summary) = match out.certified_stage() {
        Some(i) => (CERTIFIED, format!("certified at stage {i} after {} paths", out.paths_checked)),
        None => (
            STAGES_EXHAUSTED,
            format!("budget exhausted after {} stages, {} paths", out.stages.len(), out.paths_checked),
        ),
    };
    Ok(Produced {
        code,
        summary,
        side_files: vec![("stages.csv".into(), out.to_csv())],
        result: to_value(&out)?,
    })
}

/// Sweep for `calibrate`: the config section if present, else the standard sweep, or
/// the configured model alone when a pattern or stage range was requested.
pub fn sweep_config(cfg: &RunConfig, restrict: bool) -> SweepConfig {
    let mut sweep = match (&cfg.calibrate, restrict) {
        (Some(s), _) => s.clone(),
        (None, false) => SweepConfig::standard(),
        (None, true) => SweepConfig {
            models: vec![ModelSweep {
                n: cfg.model.n,
                pattern: cfg.model.pattern.clone(),
                stages: (1..=cfg.recognize.stage_max).collect(),
            }],
            ..SweepConfig::default()
        },
    };
    sweep.seed = cfg.seed;
    sweep
}

pub fn calibrate_table(sweep: &SweepConfig) -> Result<String> {
    calibrate(sweep)?.to_toml()
}
