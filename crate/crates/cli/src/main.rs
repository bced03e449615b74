mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use morse_core::error::{MorseError, Result};
use morse_core::io::{read_json, to_canonical_json, write_canonical_json};
use serde_json::Value;

use commands::{RunRecord, ERROR, REJECTED};
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "morsekit", version, about = "Certify Morse quasigeodesics and Morse actions on SL(n,R)/SO(n)")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Power budget for `schottky`, stage budget for `recognize`.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Flag type as comma-separated dimensions, e.g. `1,2`.
    #[arg(long, global = true, value_delimiter = ',')]
    pattern: Option<Vec<usize>>,
    /// Last stage read from the calibration (and swept by `calibrate`).
    #[arg(long, global = true)]
    stage_max: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Global Morse check of a path file.
    CertifyPath { path: PathBuf },
    /// Local check at the calibrated window, promoted to a global certificate.
    CertifyLocal { path: PathBuf },
    /// Schottky construction from a generator pair file.
    Schottky { generators: PathBuf },
    /// Stagewise recognition of a representation file.
    Recognize { representation: PathBuf },
    /// Writes `calibration.toml` from a sweep.
    Calibrate,
    /// Reruns a recorded command and compares results byte for byte.
    Replay { record: PathBuf },
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.pattern {
            cfg.model.pattern = p.clone();
        }
        if let Some(s) = self.stage_max {
            cfg.recognize.stage_max = s;
        }
        if let Some(b) = self.budget {
            match self.command {
                Command::Schottky { .. } => cfg.schottky.budget = b,
                _ => cfg.recognize.budget = b,
            }
        }
        Ok(cfg)
    }
}

fn write_outputs(cfg: &RunConfig, name: &str, record: &RunRecord, side: &[(String, String)]) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let target = cfg.output_dir.join(name);
    write_canonical_json(&target, record)?;
    for (file, text) in side {
        std::fs::write(cfg.output_dir.join(file), text)?;
    }
    Ok(target)
}

fn run_command(cli: &Cli, command: &str, input_path: &Path) -> Result<i32> {
    let cfg = cli.run_config()?;
    let input: Value = read_json(input_path)?;
    let produced = commands::execute(command, &cfg, &input)?;
    let record = RunRecord {
        command: command.to_string(),
        calibration_id: cfg.calibration()?.id,
        config: cfg.clone(),
        input,
        exit_code: produced.code,
        result: produced.result,
    };
    let target = write_outputs(&cfg, commands::record_name(command), &record, &produced.side_files)?;
    println!("{}; wrote {}", produced.summary, target.display());
    Ok(produced.code)
}

fn replay(record_path: &Path) -> Result<i32> {
    let record: RunRecord = read_json(record_path)?;
    let calib = record.config.calibration()?;
    if calib.id != record.calibration_id {
        return Err(MorseError::Config(format!(
            "calibration changed: record used {}, now {}",
            record.calibration_id, calib.id
        )));
    }
    let produced = commands::execute(&record.command, &record.config, &record.input)?;
    let same = produced.code == record.exit_code && to_canonical_json(&produced.result)? == to_canonical_json(&record.result)?;
    if same {
        println!("reproduced: {} ({})", record.command, produced.summary);
        Ok(0)
    } else {
        println!(
            "differs: {} exited {} (recorded {}): {}",
            record.command, produced.code, record.exit_code, produced.summary
        );
        Ok(REJECTED)
    }
}

fn calibrate(cli: &Cli) -> Result<i32> {
    let cfg = cli.run_config()?;
    let sweep = commands::sweep_config(&cfg, cli.pattern.is_some() || cli.stage_max.is_some());
    let text = commands::calibrate_table(&sweep)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let target = cfg.output_dir.join("calibration.toml");
    std::fs::write(&target, text)?;
    println!("wrote {}", target.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::CertifyPath { path } => run_command(&cli, "certify-path", path),
        Command::CertifyLocal { path } => run_command(&cli, "certify-local", path),
        Command::Schottky { generators } => run_command(&cli, "schottky", generators),
        Command::Recognize { representation } => run_command(&cli, "recognize", representation),
        Command::Calibrate => calibrate(&cli),
        Command::Replay { record } => replay(record),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR as u8)
        }
    }
}
