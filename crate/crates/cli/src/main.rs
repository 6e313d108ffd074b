use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use bandit_forest::bench::{run_experiment, RunConfig};
use bandit_forest::oracle::reference_policy;
use bandit_forest::stream::{fit_binarization, synth_labeled_dataset, DatasetStream, LabeledDataset, StreamConfig};

#[derive(Parser)]
#[command(name = "bandit-forest", version, about = "Contextual bandits with voting forests of greedy trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the learners in a config file and write the regret trace as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the reference forest of a dataset with full information.
    Oracle {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the equal-frequency binarization of a dataset.
    Binarize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic mixed-type classification dataset.
    SynthDataset {
        #[arg(long, default_value_t = 50_000)]
        rows: usize,
        #[arg(long, default_value_t = 0.1)]
        label_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_dataset(path: &PathBuf) -> Result<LabeledDataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    LabeledDataset::read(file).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if out.is_some() {
                cfg.output = out;
            }
            let output = cfg.output.clone();
            let report = run_experiment(cfg)?;
            if let Some(path) = output {
                report.write_csv(create(&path)?)?;
            } else {
                report.write_csv(std::io::stdout().lock())?;
            }
            eprint!("{}", report.summary_table());
        }
        Command::Oracle { dataset, out } => {
            let data = read_dataset(&dataset)?;
            let spec = fit_binarization(&data)?;
            let stream = DatasetStream::new(&data, &spec, StreamConfig::default())?;
            let policy = reference_policy(&stream.empirical_distribution()?);
            serde_json::to_writer(create(&out)?, &policy)?;
        }
        Command::Binarize { dataset, out } => {
            let spec = fit_binarization(&read_dataset(&dataset)?)?;
            spec.write(create(&out)?)?;
            eprintln!("{} columns, {} binary variables", spec.columns.len(), spec.width());
        }
        Command::SynthDataset {
            rows,
            label_noise,
            seed,
            out,
        } => {
            synth_labeled_dataset(rows, label_noise, seed).write(create(&out)?)?;
        }
    }
    Ok(())
}
