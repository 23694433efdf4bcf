use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use fdsim::attacks::AttackKind;
use fdsim::config::{DatasetSpec, ExperimentConfig, Protocol};
use fdsim::error::{Result, SimError};
use fdsim::metrics::{
    export_json, export_series_csv, misleading_report, ExperimentDocument, MisleadingReport,
};
use fdsim::protocol::run_experiment;
use fdsim::sweep::{run_sweep, SweepAxis};
use fdsim::Net;

#[derive(Parser)]
#[command(name = "fdsim", about = "Federated-distillation simulator with a logits-poisoning layer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and export its metrics.
    Run(RunArgs),
    /// Run a grid over one ablation axis with seeds paired across attacks.
    Sweep(SweepArgs),
    /// Re-summarize existing output directories.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Also compute a misleading-effect report for this class.
    #[arg(long = "target_class")]
    target_class: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Which knob the grid varies.
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Comma-separated attacks to pair within each cell.
    #[arg(long, value_delimiter = ',', default_values = ["none", "fdla", "random", "zero"])]
    attacks: Vec<AttackKind>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directories containing experiment JSON documents.
    dirs: Vec<PathBuf>,
}

/// Every config field as a flag; flags override config-file values.
#[derive(Args)]
#[command(rename_all = "snake_case")]
struct Overrides {
    /// JSON config file to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    protocol: Option<Protocol>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    poison_ratio: Option<f64>,
    #[arg(long, value_enum)]
    attack: Option<AttackKind>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    heterogeneous_models: Option<bool>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    exclude_self: Option<bool>,
    #[arg(long)]
    hash_dim: Option<usize>,
    // synthetic dataset knobs
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    // file-backed datasets
    #[arg(long, requires = "train_labels")]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[arg(long)]
    train_csv: Option<PathBuf>,
    #[arg(long)]
    test_csv: Option<PathBuf>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    attack_seed: Option<u64>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    training_seed: Option<u64>,
    /// Output directory.
    #[arg(long = "out")]
    out: Option<PathBuf>,
}

impl Overrides {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            protocol, clients, alpha, poison_ratio, attack, rounds, beta, temperature, lr,
            local_epochs, batch_size, heterogeneous_models, neighbors, exclude_self, hash_dim
        );
        if let Some(v) = self.data_seed {
            cfg.seeds.data = v;
        }
        if let Some(v) = self.attack_seed {
            cfg.seeds.attack = v;
        }
        if let Some(v) = self.model_seed {
            cfg.seeds.model = v;
        }
        if let Some(v) = self.training_seed {
            cfg.seeds.training = v;
        }
        if let (Some(ti), Some(tl), Some(vi), Some(vl)) = (
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ) {
            cfg.dataset = DatasetSpec::Idx {
                train_images: ti.clone(),
                train_labels: tl.clone(),
                test_images: vi.clone(),
                test_labels: vl.clone(),
            };
        } else if let (Some(train), Some(test)) = (&self.train_csv, &self.test_csv) {
            cfg.dataset = DatasetSpec::Csv {
                train: train.clone(),
                test: test.clone(),
            };
        } else if self.n_classes.is_some()
            || self.per_class.is_some()
            || self.dim.is_some()
            || self.separation.is_some()
        {
            let DatasetSpec::Synthetic {
                n_classes,
                per_class,
                dim,
                separation,
            } = cfg.dataset.clone()
            else {
                return Err(SimError::config(
                    "synthetic dataset flags given but the config uses a file dataset".to_string(),
                ));
            };
            cfg.dataset = DatasetSpec::Synthetic {
                n_classes: self.n_classes.unwrap_or(n_classes),
                per_class: self.per_class.unwrap_or(per_class),
                dim: self.dim.unwrap_or(dim),
                separation: self.separation.unwrap_or(separation),
            };
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = args.overrides.build()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let (sim, result) = run_experiment(&cfg)?;
    let misleading: Vec<MisleadingReport> = match args.target_class {
        Some(class) => {
            let nets: Vec<&Net> = sim.clients.iter().map(|c| &c.net).collect();
            vec![misleading_report(&nets, &sim.test, class)?]
        }
        None => vec![],
    };
    let doc = ExperimentDocument::new(cfg, &result, misleading);
    export_series_csv(&doc.series, &out.join("series.csv"))?;
    export_json(&doc, &out.join("result.json"))?;
    println!(
        "final mean accuracy over {} rounds: {:.4}",
        doc.series.rounds.len(),
        doc.final_mean_accuracy
    );
    println!("wrote {} and {}", out.join("series.csv").display(), out.join("result.json").display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.overrides.build()?;
    let out = cfg.output_dir.clone();
    let cells = run_sweep(&cfg, args.axis, &args.attacks, &out)?;
    for cell in &cells {
        println!(
            "{:<16} {:<8} final mean accuracy {:.4}",
            cell.column,
            cell.attack.as_str(),
            cell.final_mean_accuracy
        );
    }
    println!("summary: {}", out.join("summary.csv").display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    if args.dirs.is_empty() {
        return Err(SimError::config("report needs at least one output directory".to_string()));
    }
    println!(
        "{:<40} {:<8} {:<8} {:>6} {:>10}",
        "file", "protocol", "attack", "ratio", "final_acc"
    );
    for dir in &args.dirs {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let doc: ExperimentDocument = match serde_json::from_str(&text) {
                Ok(d) => d,
                Err(_) => continue, // not an experiment document
            };
            println!(
                "{:<40} {:<8} {:<8} {:>6.2} {:>10.4}",
                path.file_name().unwrap().to_string_lossy(),
                doc.config.protocol.to_string(),
                doc.config.attack.as_str(),
                doc.config.poison_ratio,
                doc.final_mean_accuracy
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
