//! Command implementations behind the `gda-hin` binary.

pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use gda_hin::hin::{
    generate_synthetic_pair, load_dataset, write_dataset, Domain, DomainPair, SyntheticConfig,
};
use gda_hin::trainer::{evaluate, train, Ablation, Checkpoint, Model, TrainConfig};
use gda_hin::{Error, Result};
use rayon::prelude::*;

use report::{
    confusion_matrix, confusion_tsv, embeddings_tsv, sweep_table_tsv, RunReport, SweepRow,
};

pub const REPORT_FILE: &str = "report.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const CONFUSION_FILE: &str = "confusion.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.tsv";
pub const SWEEP_FILE: &str = "sweep.tsv";

/// Exit status for an error: 1 for I/O, 3 for divergence, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Load { .. } | Error::Io(_) => 1,
        Error::Diverged { .. } => 3,
        _ => 2,
    }
}

/// Where the dataset comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Dir(PathBuf),
    Synthetic(Option<PathBuf>),
}

impl DataSource {
    /// Synthetic pairs are generated with `seed`.
    pub fn load(&self, seed: u64) -> Result<DomainPair> {
        match self {
            DataSource::Dir(p) => load_dataset(p),
            DataSource::Synthetic(cfg) => {
                let c = match cfg {
                    Some(p) => SyntheticConfig::load(p)?,
                    None => SyntheticConfig::default(),
                };
                generate_synthetic_pair(&c, seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseSelect {
    One,
    #[default]
    Both,
}

/// Base config from an optional file with command-line overrides applied.
pub fn resolve_config(
    path: Option<&Path>,
    seed: Option<u64>,
    ablation: Option<Ablation>,
) -> Result<TrainConfig> {
    let mut c = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(a) = ablation {
        c.ablation = a;
    }
    Ok(c)
}

/// Trains on `pair` and writes the report and checkpoint under `out`.
pub fn cmd_train(
    pair: &DomainPair,
    config: &TrainConfig,
    phase: PhaseSelect,
    out: &Path,
) -> Result<RunReport> {
    let outcome = train(pair, config, phase == PhaseSelect::One)?;
    let accuracy = match pair.target.labels {
        Some(_) => Some(evaluate(&outcome.model, pair)?),
        None => None,
    };
    let report = RunReport {
        config: config.clone(),
        records: outcome.trace,
        accuracy,
        pseudo_labels: outcome.pseudo_labels,
        seconds: outcome.seconds,
    };
    fs::create_dir_all(out)?;
    report.save(&out.join(REPORT_FILE))?;
    Checkpoint::from_model(&outcome.model, &pair.schema, outcome.phase)
        .save(out.join(CHECKPOINT_FILE))?;
    Ok(report)
}

/// Target accuracy of a checkpoint on `pair`; writes the confusion matrix.
pub fn cmd_evaluate(
    checkpoint: &Checkpoint,
    pair: &DomainPair,
    confusion_out: &Path,
) -> Result<f64> {
    let model = checkpoint.restore(pair)?;
    let labels = pair.target.labels.as_ref().ok_or_else(|| {
        Error::Validation("target graph has no labels to evaluate against".into())
    })?;
    let predicted = model.predict(Domain::Target)?;
    let acc = evaluate(&model, pair)?;
    let m = confusion_matrix(&predicted, labels, model.schema.num_classes);
    if let Some(dir) = confusion_out.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(confusion_out, confusion_tsv(&m))?;
    Ok(acc)
}

pub fn cmd_export_embeddings(
    checkpoint: &Checkpoint,
    pair: &DomainPair,
    out: &Path,
) -> Result<usize> {
    let model: Model = checkpoint.restore(pair)?;
    let text = embeddings_tsv(&model)?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, &text)?;
    Ok(text.lines().count())
}

/// Number of worker threads for a sweep: `GDA_HIN_THREADS` if set.
pub fn sweep_threads() -> Option<usize> {
    std::env::var("GDA_HIN_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
}

/// Runs every (ablation, seed) cell; each writes its own report under
/// `out/<ablation>/seed-<n>/`. Returns one row per ablation.
pub fn cmd_sweep(
    data: &DataSource,
    base: &TrainConfig,
    ablations: &[Ablation],
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(Ablation, u64)> = ablations
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let run = |&(ablation, seed): &(Ablation, u64)| -> Result<f64> {
        let pair = data.load(seed)?;
        let cfg = TrainConfig {
            ablation,
            seed,
            ..base.clone()
        };
        let dir = out.join(ablation.as_str()).join(format!("seed-{seed}"));
        cmd_train(&pair, &cfg, PhaseSelect::Both, &dir)?
            .accuracy
            .ok_or_else(|| Error::Validation("sweep needs target labels".into()))
    };
    let results: Vec<Result<f64>> = match sweep_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| cells.par_iter().map(run).collect()),
        None => cells.par_iter().map(run).collect(),
    };
    let mut rows: Vec<SweepRow> = ablations
        .iter()
        .map(|a| SweepRow {
            ablation: a.to_string(),
            accuracies: Vec::new(),
            failures: 0,
        })
        .collect();
    let mut last_err = None;
    for ((ablation, seed), r) in cells.iter().zip(results) {
        let row = &mut rows[ablations.iter().position(|a| a == ablation).unwrap()];
        match r {
            Ok(acc) => row.accuracies.push(acc),
            Err(e) => {
                log::error!("cell {ablation}/seed {seed} failed: {e}");
                row.failures += 1;
                last_err = Some(e);
            }
        }
    }
    fs::create_dir_all(out)?;
    fs::write(out.join(SWEEP_FILE), sweep_table_tsv(&rows))?;
    if rows.iter().all(|r| r.accuracies.is_empty()) {
        return Err(last_err.unwrap_or_else(|| Error::Config("sweep has no cells".into())));
    }
    Ok(rows)
}

pub fn cmd_generate_synthetic(config: &SyntheticConfig, seed: u64, out: &Path) -> Result<()> {
    write_dataset(&generate_synthetic_pair(config, seed)?, out)
}
