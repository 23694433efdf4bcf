//! Config-driven sweep over the ablation axes, with seeds held fixed
//! across attack variants so differences are attributable to the attack.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::attacks::AttackKind;
use crate::config::ExperimentConfig;
use crate::error::{Result, SimError};
use crate::metrics::{export_json, export_series_csv, ExperimentDocument};
use crate::protocol::run_experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum SweepAxis {
    Ratio,
    Alpha,
    Clients,
    Arch,
}

impl SweepAxis {
    /// (label, config patch) per grid column.
    fn columns(self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        match self {
            SweepAxis::Ratio => [0.1, 0.2, 0.3]
                .iter()
                .map(|&r| {
                    (
                        format!("ratio_{r}"),
                        ExperimentConfig {
                            poison_ratio: r,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
            SweepAxis::Alpha => [0.5, 1.0, 3.0]
                .iter()
                .map(|&a| {
                    (
                        format!("alpha_{a}"),
                        ExperimentConfig {
                            alpha: a,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
            SweepAxis::Clients => [20usize, 50, 200]
                .iter()
                .map(|&k| {
                    (
                        format!("clients_{k}"),
                        ExperimentConfig {
                            clients: k,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
            SweepAxis::Arch => [("homo", false), ("hetero", true)]
                .iter()
                .map(|&(name, hetero)| {
                    (
                        format!("arch_{name}"),
                        ExperimentConfig {
                            heterogeneous_models: hetero,
                            ..base.clone()
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub column: String,
    pub attack: AttackKind,
    pub final_mean_accuracy: f64,
    pub json_path: PathBuf,
}

/// Runs one experiment per (attack, axis value) cell. Every cell shares
/// the base config's seeds; for attacks other than `none` the base
/// poison ratio applies unless the axis itself is the ratio.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    attacks: &[AttackKind],
    out_dir: &Path,
) -> Result<Vec<CellResult>> {
    std::fs::create_dir_all(out_dir)?;
    let mut cells = Vec::new();
    for &attack in attacks {
        for (column, patched) in axis.columns(base) {
            let cfg = ExperimentConfig {
                attack,
                // attack=none means nobody poisons regardless of ratio
                poison_ratio: if attack == AttackKind::None {
                    0.0
                } else {
                    patched.poison_ratio
                },
                ..patched
            };
            cfg.validate()?;
            let (_, result) = run_experiment(&cfg)?;
            let stem = format!("{}_{}", column, attack);
            let json_path = out_dir.join(format!("{stem}.json"));
            let doc = ExperimentDocument::new(cfg, &result, vec![]);
            export_json(&doc, &json_path)?;
            export_series_csv(&doc.series, &out_dir.join(format!("{stem}.csv")))?;
            cells.push(CellResult {
                column,
                attack,
                final_mean_accuracy: result.final_mean_accuracy,
                json_path,
            });
        }
    }
    write_summary(&cells, &out_dir.join("summary.csv"))?;
    Ok(cells)
}

/// Summary table: one row per attack, one column per axis value. The
/// lowest accuracy per column is marked `*`, the second lowest `+`.
pub fn write_summary(cells: &[CellResult], path: &Path) -> Result<()> {
    if cells.is_empty() {
        return Err(SimError::input("no sweep results to summarize".to_string()));
    }
    let mut columns: Vec<String> = Vec::new();
    let mut attacks: Vec<AttackKind> = Vec::new();
    for c in cells {
        if !columns.contains(&c.column) {
            columns.push(c.column.clone());
        }
        if !attacks.contains(&c.attack) {
            attacks.push(c.attack);
        }
    }
    let lookup = |attack: AttackKind, column: &str| -> Option<f64> {
        cells
            .iter()
            .find(|c| c.attack == attack && c.column == column)
            .map(|c| c.final_mean_accuracy)
    };
    // Per column: rank accuracies to find lowest and second lowest.
    let mut marks: Vec<Vec<&str>> = Vec::new();
    for col in &columns {
        let mut vals: Vec<(usize, f64)> = attacks
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| lookup(a, col).map(|v| (i, v)))
            .collect();
        vals.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let mut col_marks = vec![""; attacks.len()];
        if let Some(&(i, _)) = vals.first() {
            col_marks[i] = "*";
        }
        if let Some(&(i, _)) = vals.get(1) {
            col_marks[i] = "+";
        }
        marks.push(col_marks);
    }

    let mut file = std::fs::File::create(path)?;
    writeln!(file, "attack,{}", columns.join(","))?;
    for (i, &attack) in attacks.iter().enumerate() {
        let mut row = attack.as_str().to_string();
        for (j, col) in columns.iter().enumerate() {
            match lookup(attack, col) {
                Some(v) => row.push_str(&format!(",{:.4}{}", v, marks[j][i])),
                None => row.push(','),
            }
        }
        writeln!(file, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DatasetSpec;

    fn tiny_base() -> ExperimentConfig {
        ExperimentConfig {
            clients: 4,
            rounds: 2,
            poison_ratio: 0.25,
            dataset: DatasetSpec::Synthetic {
                n_classes: 3,
                per_class: 20,
                dim: 4,
                separation: 2.0,
            },
            ..Default::default()
        }
    }

    #[test]
    fn ratio_axis_times_four_attacks_is_twelve_cells() {
        let dir = tempfile::tempdir().unwrap();
        let cells = run_sweep(
            &tiny_base(),
            SweepAxis::Ratio,
            &[
                AttackKind::None,
                AttackKind::Fdla,
                AttackKind::Random,
                AttackKind::Zero,
            ],
            dir.path(),
        )
        .unwrap();
        assert_eq!(cells.len(), 12);
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines.len(), 5); // header + 4 attacks
        assert!(lines[0].contains("ratio_0.1"));
    }

    #[test]
    fn arch_axis_has_two_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cells = run_sweep(&tiny_base(), SweepAxis::Arch, &[AttackKind::Fdla], dir.path())
            .unwrap();
        assert_eq!(cells.len(), 2);
    }

    #[test]
    fn summary_marks_lowest_per_column() {
        let cells = vec![
            CellResult {
                column: "c".to_string(),
                attack: AttackKind::None,
                final_mean_accuracy: 0.9,
                json_path: PathBuf::new(),
            },
            CellResult {
                column: "c".to_string(),
                attack: AttackKind::Fdla,
                final_mean_accuracy: 0.5,
                json_path: PathBuf::new(),
            },
            CellResult {
                column: "c".to_string(),
                attack: AttackKind::Zero,
                final_mean_accuracy: 0.6,
                json_path: PathBuf::new(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_summary(&cells, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("fdla,0.5000*"), "{text}");
        assert!(text.contains("zero,0.6000+"), "{text}");
    }
}
