use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gda_hin::hin::SyntheticConfig;
use gda_hin::trainer::{Ablation, Checkpoint};
use gda_hin::Result;
use gda_hin_cli::{
    cmd_evaluate, cmd_export_embeddings, cmd_generate_synthetic, cmd_sweep, cmd_train, exit_code,
    resolve_config, DataSource, PhaseSelect, CONFUSION_FILE, EMBEDDINGS_FILE,
};

#[derive(Parser)]
#[command(
    name = "gda-hin",
    version,
    about = "Domain adaptation across heterogeneous information networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct DataArgs {
    /// Dataset directory (schema.tsv plus source/ and target/).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic generator config (key=value); `default` for built-in values.
    #[arg(long)]
    synthetic: Option<String>,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        match (&self.data, &self.synthetic) {
            (Some(d), _) => DataSource::Dir(d.clone()),
            (None, Some(s)) if s == "default" => DataSource::Synthetic(None),
            (None, Some(s)) => DataSource::Synthetic(Some(PathBuf::from(s))),
            (None, None) => unreachable!("clap requires one data source"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    s.parse().map_err(|e: gda_hin::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Train (phase I then phase II) and write report.tsv and checkpoint.txt.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_ablation)]
        ablation: Option<Ablation>,
        #[arg(long, value_enum, default_value = "both")]
        phase: PhaseArg,
    },
    /// Print target accuracy of a checkpoint and write a confusion matrix.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory for confusion.tsv (defaults to the checkpoint's).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Synthetic data seed (defaults to the checkpoint's training seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write classified-type embeddings of both domains as TSV.
    ExportEmbeddings {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output file, or a directory to receive embeddings.tsv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train every (ablation, seed) cell and tabulate accuracies.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_ablation, default_value = "full,wo_P,wo_T,w_S")]
        ablation: Vec<Ablation>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seed: Vec<u64>,
    },
    /// Write a synthetic shifted pair in the dataset layout.
    GenerateSynthetic {
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_checkpoint(
    path: &Path,
    data: &DataArgs,
    seed: Option<u64>,
) -> Result<(Checkpoint, gda_hin::hin::DomainPair)> {
    let ckpt = Checkpoint::load(path)?;
    let pair = data.source().load(seed.unwrap_or(ckpt.config.seed))?;
    Ok((ckpt, pair))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            data,
            config,
            out,
            seed,
            ablation,
            phase,
        } => {
            let cfg = resolve_config(config.as_deref(), seed, ablation)?;
            let pair = data.source().load(cfg.seed)?;
            let phase = match phase {
                PhaseArg::One => PhaseSelect::One,
                PhaseArg::Two | PhaseArg::Both => PhaseSelect::Both,
            };
            let report = cmd_train(&pair, &cfg, phase, &out)?;
            match report.accuracy {
                Some(a) => println!("accuracy\t{:.2}", 100.0 * a),
                None => println!("accuracy\tNA"),
            }
            println!("output\t{}", out.display());
        }
        Command::Evaluate {
            data,
            checkpoint,
            out,
            seed,
        } => {
            let (ckpt, pair) = load_checkpoint(&checkpoint, &data, seed)?;
            let dir = out.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_default()
            });
            let acc = cmd_evaluate(&ckpt, &pair, &dir.join(CONFUSION_FILE))?;
            println!("accuracy\t{:.2}", 100.0 * acc);
        }
        Command::ExportEmbeddings {
            data,
            checkpoint,
            out,
            seed,
        } => {
            let (ckpt, pair) = load_checkpoint(&checkpoint, &data, seed)?;
            let file = if out.is_dir() {
                out.join(EMBEDDINGS_FILE)
            } else {
                out
            };
            let rows = cmd_export_embeddings(&ckpt, &pair, &file)?;
            println!("rows\t{rows}");
        }
        Command::Sweep {
            data,
            config,
            out,
            ablation,
            seed,
        } => {
            let base = resolve_config(config.as_deref(), None, None)?;
            let rows = cmd_sweep(&data.source(), &base, &ablation, &seed, &out)?;
            print!("{}", gda_hin_cli::report::sweep_table_tsv(&rows));
        }
        Command::GenerateSynthetic {
            synthetic,
            out,
            seed,
        } => {
            let cfg = match synthetic {
                Some(p) => SyntheticConfig::load(p)?,
                None => SyntheticConfig::default(),
            };
            cmd_generate_synthetic(&cfg, seed, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
