//! Experiment plumbing: configs, Monte-Carlo SER sweeps, CSV output and
//! the brute-force oracle suites.

mod config;
mod oracle;
mod sweep;

pub use config::{ChannelFamily, CsiTraining, Detector, ExperimentConfig, MimoMatrix, SicModel, SEED_ENV};
pub use oracle::{oracle_check, OracleCheck, OracleReport, Suite};
pub use sweep::{finite_memory_blocks, run_sweep, train_model, write_outputs};

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Fraction of positions where `decided` and `truth` differ.
pub fn ser(decided: &[usize], truth: &[usize]) -> Result<f64> {
    if decided.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid(format!(
            "need equal non-empty lengths, got {} and {}",
            decided.len(),
            truth.len()
        )));
    }
    Ok(count_errors(decided, truth) as f64 / truth.len() as f64)
}

pub(crate) fn count_errors(decided: &[usize], truth: &[usize]) -> u64 {
    decided.iter().zip(truth).filter(|(a, b)| a != b).count() as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SerRow {
    pub detector: String,
    pub snr_db: f64,
    pub n_symbols: u64,
    pub n_errors: u64,
    pub seed: u64,
}

impl SerRow {
    pub fn ser(&self) -> f64 {
        self.n_errors as f64 / self.n_symbols as f64
    }

    /// Monte-Carlo standard error `sqrt(ser (1 - ser) / n)`.
    pub fn stderr(&self) -> f64 {
        let p = self.ser();
        (p * (1.0 - p) / self.n_symbols as f64).sqrt()
    }
}

/// Combined standard error of the difference of two independent estimates.
pub fn combined_stderr(a: &SerRow, b: &SerRow) -> f64 {
    (a.stderr().powi(2) + b.stderr().powi(2)).sqrt()
}

pub const CSV_HEADER: &str = "detector,snr_db,ser,stderr,n_symbols,n_errors,seed";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SerCurve {
    pub rows: Vec<SerRow>,
}

impl SerCurve {
    pub fn get(&self, detector: &str, snr_db: f64) -> Option<&SerRow> {
        self.rows.iter().find(|r| r.detector == detector && r.snr_db == snr_db)
    }

    pub fn detector<'a>(&'a self, detector: &'a str) -> impl Iterator<Item = &'a SerRow> {
        self.rows.iter().filter(move |r| r.detector == detector)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:?},{:?},{:?},{},{},{}",
                r.detector,
                r.snr_db,
                r.ser(),
                r.stderr(),
                r.n_symbols,
                r.n_errors,
                r.seed
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let bad = |message: String| Error::Parse { line: i + 2, message };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad integer {s:?}")));
            rows.push(SerRow {
                detector: f[0].to_string(),
                snr_db: num(f[1])?,
                n_symbols: int(f[4])?,
                n_errors: int(f[5])?,
                seed: int(f[6])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Companion files written next to a CSV: `<csv>.meta` and `<csv>.gp`.
pub fn companion_paths(csv: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = csv.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".meta"), with(".gp"))
}

/// A gnuplot script that draws one SER curve per detector.
pub fn plot_script(csv: &Path, curve: &SerCurve) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in &curve.rows {
        if !names.contains(&r.detector.as_str()) {
            names.push(&r.detector);
        }
    }
    let file = csv.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut s = String::new();
    s.push_str("# gnuplot script; run `gnuplot -p <this file>` from the CSV's directory\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale y\n");
    s.push_str("set xlabel 'SNR [dB]'\n");
    s.push_str("set ylabel 'SER'\n");
    s.push_str("set grid\n");
    s.push_str(&format!("file = '{file}'\n"));
    s.push_str(&format!("detectors = \"{}\"\n", names.join(" ")));
    s.push_str(
        "plot for [d in detectors] file skip 1 using 2:(strcol(1) eq d ? $3 : 1/0) with linespoints title d\n",
    );
    s
}
