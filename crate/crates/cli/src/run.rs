//! Dataset verification and the run manifest.

use std::path::PathBuf;

use log::info;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use stairverify::formulations::VerificationQuery;
use stairverify::network::Network;
use stairverify::verifier::{verify, Mode, Verdict, VerifyConfig, VerifyReport};
use stairverify::Error;

use crate::io::{CliError, CliResult, Sample};

#[derive(Debug, Clone, Serialize)]
pub struct RowReport {
    /// Zero-based row index in the dataset file.
    pub index: usize,
    pub label: usize,
    pub report: VerifyReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub rows: usize,
    pub verified: usize,
    pub falsified: usize,
    pub unknown: usize,
    pub mean_time: f64,
    pub std_time: f64,
}

impl Summary {
    pub fn of(rows: &[RowReport]) -> Self {
        let count = |v| rows.iter().filter(|r| r.report.verdict == v).count();
        let times: Vec<f64> = rows.iter().map(|r| r.report.total_time).collect();
        let n = times.len().max(1) as f64;
        let mean = times.iter().sum::<f64>() / n;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        Self {
            rows: rows.len(),
            verified: count(Verdict::Robust),
            falsified: count(Verdict::Falsified),
            unknown: count(Verdict::Unknown),
            mean_time: mean,
            std_time: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub net: PathBuf,
    pub dataset: PathBuf,
    pub eps: f64,
    pub seed: u64,
    pub jobs: usize,
    /// Rows checked when `--sample` was given, otherwise every row.
    pub selected: Vec<usize>,
    pub config: VerifyConfig,
    pub rows: Vec<RowReport>,
    pub summary: Summary,
}

pub struct RunSettings {
    pub net_path: PathBuf,
    pub dataset_path: PathBuf,
    pub eps: f64,
    pub config: VerifyConfig,
    pub jobs: usize,
    pub seed: u64,
    pub sample: Option<usize>,
    pub strip_times: bool,
}

/// Indices of the rows to check: all of them, or a seeded random subset in
/// increasing order.
pub fn select_rows(total: usize, sample_size: Option<usize>, seed: u64) -> Vec<usize> {
    match sample_size {
        Some(m) if m < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, total, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    }
}

fn check_row(net: &Network, sample: &Sample, index: usize, eps: f64, config: &VerifyConfig) -> CliResult<RowReport> {
    let query = VerificationQuery::new(net.clone(), sample.input.clone(), eps, sample.label)
        .map_err(|e| CliError::Input(format!("row {index}: {e}")))?;
    let report = match verify(&query, config) {
        Ok(r) => r,
        Err(e @ (Error::Numerical(_) | Error::Infeasible(_) | Error::Formulation(_) | Error::Degenerate(_))) => {
            // Keep the row and report it as undecided.
            let mut r = VerifyReport::new(config.mode);
            r.message = Some(e.to_string());
            r
        }
        Err(e) => return Err(CliError::from(e).with_context(&format!("row {index}"))),
    };
    info!("row {index}: {:?} in {:.3}s", report.verdict, report.total_time);
    Ok(RowReport { index, label: sample.label, report })
}

pub fn run(net: &Network, data: &[Sample], settings: &RunSettings) -> CliResult<RunManifest> {
    settings.config.validate()?;
    let selected = select_rows(data.len(), settings.sample, settings.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.max(1))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let mut rows: Vec<RowReport> = pool.install(|| {
        selected
            .par_iter()
            .map(|&i| check_row(net, &data[i], i, settings.eps, &settings.config))
            .collect::<CliResult<_>>()
    })?;
    if settings.strip_times {
        for r in &mut rows {
            let rep = &mut r.report;
            (rep.solve_time, rep.separation_time, rep.total_time) = (0.0, 0.0, 0.0);
        }
    }
    let summary = Summary::of(&rows);
    Ok(RunManifest {
        tool: "stairverify",
        version: env!("CARGO_PKG_VERSION"),
        net: settings.net_path.clone(),
        dataset: settings.dataset_path.clone(),
        eps: settings.eps,
        seed: settings.seed,
        jobs: settings.jobs,
        selected,
        config: settings.config.clone(),
        rows,
        summary,
    })
}

/// CSV rendering: one line per row, the largest target bound as `bound`.
pub fn to_csv(manifest: &RunManifest) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Other(e.to_string());
    w.write_record(["index", "label", "mode", "verdict", "bound", "nodes", "cuts", "gap_percent", "time", "message"]).map_err(err)?;
    for r in &manifest.rows {
        let rep = &r.report;
        let bound = rep.targets.iter().map(|t| t.bound).fold(f64::NEG_INFINITY, f64::max);
        let verdict = match rep.verdict {
            Verdict::Robust => "robust",
            Verdict::Falsified => "falsified",
            Verdict::Unknown => "unknown",
        };
        w.write_record([
            r.index.to_string(),
            r.label.to_string(),
            rep.mode.to_string(),
            verdict.to_string(),
            if rep.targets.is_empty() { String::new() } else { bound.to_string() },
            rep.nodes.to_string(),
            rep.cuts_added.to_string(),
            rep.gap_percent.map_or_else(String::new, |g| g.to_string()),
            rep.total_time.to_string(),
            rep.message.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Other(e.to_string()))
}

pub fn summary_line(mode: Mode, s: &Summary) -> String {
    format!(
        "{mode}: verified {}/{} (falsified {}, unknown {}), time {:.3} ± {:.3} s",
        s.verified, s.rows, s.falsified, s.unknown, s.mean_time, s.std_time
    )
}
