//! Accuracy evaluation, convergence tracking, the misleading-effect
//! analysis, and machine-readable export.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::data::Dataset;
use crate::error::{Result, SimError};
use crate::protocol::{ExperimentResult, RoundReport};
use crate::Net;

/// Top-1 accuracy on a labeled dataset. Argmax ties go to the lowest
/// class index.
pub fn evaluate(net: &Net, test: &Dataset) -> Result<f64> {
    let logits = net.forward(&test.features)?;
    let mut correct = 0usize;
    for r in 0..test.len() {
        if argmax(logits.row(r)) == test.labels[r] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Accuracy trajectory across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSeries {
    pub rounds: Vec<RoundStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub per_client: Vec<f64>,
}

impl ConvergenceSeries {
    pub fn from_reports(reports: &[RoundReport]) -> ConvergenceSeries {
        let rounds = reports
            .iter()
            .map(|r| {
                let min = r
                    .per_client_accuracy
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                let max = r
                    .per_client_accuracy
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                RoundStats {
                    round: r.round,
                    mean_accuracy: r.mean_accuracy,
                    min_accuracy: min,
                    max_accuracy: max,
                    per_client: r.per_client_accuracy.clone(),
                }
            })
            .collect();
        ConvergenceSeries { rounds }
    }

    /// First round at which the mean accuracy reaches `fraction` of its
    /// final value.
    pub fn convergence_round(&self, fraction: f64) -> Option<usize> {
        let final_acc = self.rounds.last()?.mean_accuracy;
        let threshold = fraction * final_acc;
        self.rounds
            .iter()
            .find(|r| r.mean_accuracy >= threshold)
            .map(|r| r.round)
    }
}

/// Where the prediction mass for one class's test samples ends up,
/// pooled over all client models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisleadingReport {
    pub target_class: usize,
    /// Predicted-class counts over clients x target-class samples.
    pub histogram: Vec<usize>,
    /// Per-client predicted-class counts.
    pub per_client_histogram: Vec<Vec<usize>>,
    /// Target-class count divided by the largest non-target count.
    /// `None` when no non-target prediction occurred.
    pub ratio_top2: Option<f64>,
}

pub fn misleading_report(
    nets: &[&Net],
    test: &Dataset,
    target_class: usize,
) -> Result<MisleadingReport> {
    if target_class >= test.n_classes {
        return Err(SimError::input(format!(
            "target class {target_class} out of range"
        )));
    }
    let target_indices: Vec<usize> = (0..test.len())
        .filter(|&i| test.labels[i] == target_class)
        .collect();
    if target_indices.is_empty() {
        return Err(SimError::input(format!(
            "no test samples with class {target_class}"
        )));
    }
    let samples = test.features.select_rows(&target_indices);
    let mut histogram = vec![0usize; test.n_classes];
    let mut per_client_histogram = Vec::with_capacity(nets.len());
    for net in nets {
        let logits = net.forward(&samples)?;
        let mut local = vec![0usize; test.n_classes];
        for r in 0..samples.rows() {
            local[argmax(logits.row(r))] += 1;
        }
        for (h, &l) in histogram.iter_mut().zip(&local) {
            *h += l;
        }
        per_client_histogram.push(local);
    }
    let runner_up = histogram
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != target_class)
        .map(|(_, &n)| n)
        .max()
        .unwrap_or(0);
    let ratio_top2 = if runner_up > 0 {
        Some(histogram[target_class] as f64 / runner_up as f64)
    } else {
        None
    };
    Ok(MisleadingReport {
        target_class,
        histogram,
        per_client_histogram,
        ratio_top2,
    })
}

/// One machine-readable document per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDocument {
    pub config: ExperimentConfig,
    pub series: ConvergenceSeries,
    pub final_mean_accuracy: f64,
    pub misleading: Vec<MisleadingReport>,
}

impl ExperimentDocument {
    pub fn new(
        config: ExperimentConfig,
        result: &ExperimentResult,
        misleading: Vec<MisleadingReport>,
    ) -> ExperimentDocument {
        ExperimentDocument {
            config,
            series: ConvergenceSeries::from_reports(&result.reports),
            final_mean_accuracy: result.final_mean_accuracy,
            misleading,
        }
    }
}

/// CSV export: `round,mean_acc,min_acc,max_acc,client_0,...`. Field
/// order is fixed so identical runs produce byte-identical files.
pub fn export_series_csv(series: &ConvergenceSeries, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let n_clients = series.rounds.first().map_or(0, |r| r.per_client.len());
    let mut header = String::from("round,mean_acc,min_acc,max_acc");
    for k in 0..n_clients {
        header.push_str(&format!(",client_{k}"));
    }
    writeln!(file, "{header}")?;
    for r in &series.rounds {
        let mut line = format!(
            "{},{},{},{}",
            r.round, r.mean_accuracy, r.min_accuracy, r.max_accuracy
        );
        for v in &r.per_client {
            line.push_str(&format!(",{v}"));
        }
        writeln!(file, "{line}")?;
    }
    Ok(())
}

pub fn export_json(doc: &ExperimentDocument, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| SimError::Io(std::io::Error::other(e)))?;
    std::fs::write(path, text)?;
    Ok(())
}
