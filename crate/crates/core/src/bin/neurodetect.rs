use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use neurodetect::detect_ml::{
    bcjrnet_detect, deepsic_detect, read_model, viterbinet_detect, write_deepsic, write_likelihood_model, Model,
};
use neurodetect::detect_model::ViterbiMode;
use neurodetect::harness::{oracle_check, run_sweep, train_model, write_outputs, ExperimentConfig};
use neurodetect::{Error, Result};

#[derive(Parser)]
#[command(name = "neurodetect", version, about = "Model-based and data-driven symbol detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an SER sweep and write the CSV with its .meta and .gp companions.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Use 50000 test symbols per point.
        #[arg(long)]
        paper_scale: bool,
        /// CSI error variance handed to the detectors (overrides sigma_e2).
        #[arg(long, value_name = "SIGMA_E2")]
        csi_error: Option<f64>,
        /// Output CSV; defaults to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the config's learned detector at its first channel and SNR.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Decode observations with a trained model.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Trellis detector for likelihood models.
        #[arg(long, value_enum, default_value_t = TrellisDetector::Viterbinet)]
        detector: TrellisDetector,
        #[arg(long, value_enum, default_value_t = Mode::Traceback)]
        mode: Mode,
    },
    /// Run a brute-force oracle suite; exits non-zero on any failure.
    OracleCheck {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TrellisDetector {
    Viterbinet,
    Bcjrnet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Traceback,
    Sequential,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep {
            config,
            paper_scale,
            csi_error,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if paper_scale {
                cfg = cfg.paper_scale();
            }
            if let Some(s) = csi_error {
                cfg.sigma_e2 = s;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::InvalidArgument("output: pass --out or set `output` in the config".into()))?;
            cfg.validate()?;
            let curve = run_sweep(&cfg)?;
            write_outputs(&cfg, &curve, &out)?;
            print!("{}", curve.to_csv());
        }
        Command::Train { config, model_out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mut file = File::create(&model_out)?;
            match train_model(&cfg)? {
                Model::Likelihood(m) => write_likelihood_model(&m, &mut file)?,
                Model::DeepSic(net) => write_deepsic(&net, &mut file)?,
            }
            file.flush()?;
        }
        Command::Detect {
            model,
            input,
            out,
            detector,
            mode,
        } => detect(&model, &input, &out, detector, mode)?,
        Command::OracleCheck { suite, seed } => {
            let report = oracle_check(&suite, seed)?;
            print!("{report}");
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Numeric rows of a CSV; a non-numeric first line is taken as a header.
fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if rows.is_empty() && i == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("non-numeric row {line:?}"),
                })
            }
        }
    }
    Ok(rows)
}

fn detect(model: &Path, input: &Path, out: &Path, detector: TrellisDetector, mode: Mode) -> Result<()> {
    let model = read_model(BufReader::new(File::open(model)?))?;
    let rows = read_rows(input)?;
    let mut text = String::new();
    match model {
        Model::Likelihood(m) => {
            if rows.iter().any(|r| r.len() != 1) {
                return Err(Error::InvalidArgument("likelihood models read one observation per row".into()));
            }
            let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let decided = match detector {
                TrellisDetector::Viterbinet => {
                    let mode = match mode {
                        Mode::Traceback => ViterbiMode::Traceback,
                        Mode::Sequential => ViterbiMode::Sequential,
                    };
                    viterbinet_detect(&m, &y, mode)?
                }
                TrellisDetector::Bcjrnet => bcjrnet_detect(&m, &y)?,
            };
            text.push_str("symbol\n");
            for d in decided {
                text.push_str(&format!("{d}\n"));
            }
        }
        Model::DeepSic(net) => {
            let header: Vec<String> = (0..net.users()).map(|k| format!("s{k}")).collect();
            text.push_str(&header.join(","));
            text.push('\n');
            for y in &rows {
                let decided: Vec<String> = deepsic_detect(&net, y)?.iter().map(|d| d.to_string()).collect();
                text.push_str(&decided.join(","));
                text.push('\n');
            }
        }
    }
    fs::write(out, text)?;
    Ok(())
}
