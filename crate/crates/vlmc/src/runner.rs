//! Runs a list of experiments and writes their reports.
//!
//! Seeding: experiment `i` of kind `k` gets
//! `splitmix64(splitmix64(seed) ^ fnv1a64(k) ^ i)` unless its configuration
//! pins a seed, and sample `j` inside the experiment draws from stream `j`
//! of that seed. Outputs depend only on the manifest, never on timing or on
//! the number of threads.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Config, ExperimentConfig, Kind};
use crate::error::CliError;
use crate::report::{Check, Verdict, VerificationReport};
use crate::verify::run_experiment;

/// Everything that determines the bytes a run writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: String,
    /// SHA-256 of the model section in canonical (sorted-key) JSON.
    pub spec_hash: String,
    pub experiments: Vec<ExperimentConfig>,
    pub seed: u64,
    pub tool_version: String,
    /// Not serialized, so identical runs into different directories match.
    #[serde(skip)]
    pub out_dir: String,
    pub tolerance_scale: f64,
}

impl RunManifest {
    pub fn new(config: &Config, config_path: &str, seed: u64, out_dir: &Path, tolerance_scale: f64) -> Self {
        let canonical = serde_json::to_vec(&config.model.source).expect("model JSON serializes");
        Self {
            config_path: config_path.to_string(),
            spec_hash: hex::encode(Sha256::digest(&canonical)),
            experiments: config.experiments.clone(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            out_dir: out_dir.display().to_string(),
            tolerance_scale,
        }
    }
}

/// One line of the summary index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub kind: Kind,
    pub output: String,
    pub seed: u64,
    pub verdict: Verdict,
    pub error: Option<String>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub manifest: RunManifest,
    pub experiments: Vec<SummaryEntry>,
    pub verdict: Verdict,
}

impl Summary {
    /// Whether every stored verdict follows from the stored checks.
    pub fn is_consistent(&self) -> bool {
        let entries_ok = self.experiments.iter().all(|e| {
            let recomputed = VerificationReport::verdict_of(&e.checks, e.error.is_some());
            e.checks.iter().all(|c| c.recheck() == c.verdict) && recomputed == e.verdict
        });
        entries_ok && self.verdict == overall_verdict(self.experiments.iter().map(|e| e.verdict))
    }
}

pub struct RunOutcome {
    pub reports: Vec<VerificationReport>,
    pub summary: Summary,
}

impl RunOutcome {
    /// Process exit status: 0 iff every experiment passed.
    pub fn exit_code(&self) -> i32 {
        if self.summary.verdict == Verdict::Pass {
            0
        } else {
            1
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of experiment `index` of the given kind.
pub fn experiment_seed(global: u64, kind: Kind, index: usize) -> u64 {
    splitmix64(splitmix64(global) ^ fnv1a64(kind.name().as_bytes()) ^ index as u64)
}

/// `report-x.json` pairs with `table-x.csv`; other names get a `.csv` twin.
pub fn table_name(output: &str) -> String {
    let stem = output.strip_suffix(".json").unwrap_or(output);
    match stem.strip_prefix("report-") {
        Some(rest) => format!("table-{rest}.csv"),
        None => format!("{stem}.csv"),
    }
}

fn overall_verdict(verdicts: impl Iterator<Item = Verdict>) -> Verdict {
    let mut v = Verdict::Pass;
    for x in verdicts {
        match x {
            Verdict::HardFail => return Verdict::HardFail,
            Verdict::StatisticalMiss => v = Verdict::StatisticalMiss,
            _ => {}
        }
    }
    v
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(&path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
    bytes.push(b'\n');
    bytes
}

/// Rejects two experiments writing the same report or table file.
pub fn check_outputs(experiments: &[ExperimentConfig]) -> Result<(), CliError> {
    let mut seen = BTreeSet::new();
    for e in experiments {
        for name in [e.output.clone(), table_name(&e.output)] {
            if name == "summary.json" || !seen.insert(name.clone()) {
                return Err(CliError::DuplicateOutput { path: PathBuf::from(name) });
            }
        }
    }
    Ok(())
}

/// Runs the manifest against `config.model` and writes every report, table
/// and `summary.json` into `manifest.out_dir`. Wall times go to stderr only.
pub fn run(config: &Config, manifest: &RunManifest, parallel: bool) -> Result<RunOutcome, CliError> {
    check_outputs(&manifest.experiments)?;
    let out = PathBuf::from(&manifest.out_dir);
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let one = |(i, cfg): (usize, &ExperimentConfig)| {
        let started = Instant::now();
        let seed = experiment_seed(manifest.seed, cfg.kind, i);
        let report = run_experiment(&config.model, cfg, seed, manifest.tolerance_scale);
        eprintln!("{} ({}): {} in {:.2?}", cfg.kind, cfg.output, report.verdict, started.elapsed());
        report
    };
    let reports: Vec<VerificationReport> = if parallel {
        manifest.experiments.par_iter().enumerate().map(one).collect()
    } else {
        manifest.experiments.iter().enumerate().map(one).collect()
    };
    let mut entries = Vec::with_capacity(reports.len());
    for (cfg, report) in manifest.experiments.iter().zip(&reports) {
        write(out.join(&cfg.output), &to_json(report))?;
        let table = report.table_csv().map_err(|e| CliError::Format { path: out.join(table_name(&cfg.output)), message: e.to_string() })?;
        write(out.join(table_name(&cfg.output)), table.as_bytes())?;
        entries.push(SummaryEntry {
            kind: report.kind,
            output: cfg.output.clone(),
            seed: report.seed,
            verdict: report.verdict,
            error: report.error.clone(),
            checks: report.checks.clone(),
        });
    }
    let verdict = overall_verdict(entries.iter().map(|e| e.verdict));
    let summary = Summary { manifest: manifest.clone(), experiments: entries, verdict };
    write(out.join("summary.json"), &to_json(&summary))?;
    Ok(RunOutcome { reports, summary })
}
