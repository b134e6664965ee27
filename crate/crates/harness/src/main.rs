use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use tfish_core::probes::{run_probe, TestSignal};
use tfish_core::{wav, CorruptionSpec, EncoderModel, FeatureConfig, FilterMode, ModelConfig, SilentReference};
use tfish_harness::config::{AdaptationConfig, ExperimentConfig};
use tfish_harness::experiment::{dump_activations, train_model, write_rows, Evaluator, Grid, ResultRow};
use tfish_harness::{gen_dataset, Dataset, DEFAULT_ENDING_BLOCK, DEFAULT_RIDGE_LAMBDA};

#[derive(Parser)]
#[command(name = "tfish", version, about = "Band filtering inside a frozen spectrogram transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    GenDataset {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a seeded encoder and fit its head on the clean train split.
    TrainHead {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RIDGE_LAMBDA)]
        ridge_lambda: f64,
        /// Experiment config supplying model and feature settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Baseline vs adapted accuracy over an SNR x order grid.
    Eval {
        /// One or more model files; rows are emitted per model.
        #[arg(long, value_delimiter = ',', required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,-10,-15")]
        snr: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        order: Vec<usize>,
        #[arg(long, default_value_t = 1000.0)]
        cutoff_hz: f64,
        #[arg(long, default_value_t = DEFAULT_ENDING_BLOCK)]
        ending_block: usize,
        #[command(flatten)]
        mode: ModeArgs,
        /// Leave the patch-embedding output unfiltered.
        #[arg(long)]
        skip_embedding: bool,
        #[arg(long, default_value_t = Grid::default().noise_seed)]
        noise_seed: u64,
        /// Silent-reference cache; created when missing.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapted accuracy for every ending block at one corruption cell.
    SweepEndingBlock {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr: f64,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 1000.0)]
        cutoff_hz: f64,
        /// Override the mapped cutoff bin.
        #[arg(long)]
        cutoff_bin: Option<usize>,
        #[arg(long, default_value_t = Grid::default().noise_seed)]
        noise_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Differentiation and kurtosis probes for a test signal.
    Probe {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = ["sine", "square", "noise"])]
        signal: String,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write unfolded block activations of one clip.
    DumpActivations {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        clip: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        blocks: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(multiple = false)]
struct ModeArgs {
    /// Replace every bin at or above the cutoff bin (default).
    #[arg(long)]
    band: bool,
    /// Replace only the cutoff bin.
    #[arg(long)]
    single_bin: bool,
}

impl ModeArgs {
    fn mode(&self) -> FilterMode {
        if self.single_bin {
            FilterMode::SingleBin
        } else {
            FilterMode::Band
        }
    }
}

fn load_dataset(dir: &PathBuf) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn load_model(path: &PathBuf) -> Result<EncoderModel> {
    EncoderModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn evaluator(model: EncoderModel, cache: Option<&PathBuf>) -> Result<Evaluator> {
    let Some(path) = cache else {
        return Ok(Evaluator::new(model)?);
    };
    if path.exists() {
        let reference = SilentReference::load(path)
            .with_context(|| format!("loading reference {}", path.display()))?;
        if reference.fingerprint == model.fingerprint() {
            return Ok(Evaluator::with_reference(model, reference)?);
        }
        warn!("{} belongs to another model; recapturing", path.display());
    }
    let ev = Evaluator::new(model)?;
    ev.reference.save(path)?;
    Ok(ev)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDataset { config, out } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let ds = gen_dataset(&cfg.dataset)?;
            ds.save(&out)?;
            info!("wrote {} clips to {}", ds.clips.len(), out.display());
        }
        Command::TrainHead {
            dataset,
            model_out,
            seed,
            ridge_lambda,
            config,
        } => {
            let (model_cfg, feat_cfg) = match config {
                Some(p) => {
                    let c = ExperimentConfig::load(&p)?;
                    (c.model, c.features)
                }
                None => (ModelConfig::default(), FeatureConfig::default()),
            };
            let ds = load_dataset(&dataset)?;
            let model = train_model(&ModelConfig { seed, ..model_cfg }, &feat_cfg, &ds, ridge_lambda)?;
            model.save(&model_out)?;
            info!("model seed {seed} written to {}", model_out.display());
        }
        Command::Eval {
            model,
            dataset,
            snr,
            order,
            cutoff_hz,
            ending_block,
            mode,
            skip_embedding,
            noise_seed,
            reference,
            out,
        } => {
            if model.len() < 3 {
                warn!("{} model seed(s); headline numbers average three", model.len());
            }
            if reference.is_some() && model.len() > 1 {
                bail!("--reference caches a single model; pass one --model with it");
            }
            let ds = load_dataset(&dataset)?;
            let grid = Grid {
                snr_db: snr,
                orders: order,
                cutoff_hz,
                noise_seed,
            };
            let adapt_cfg = AdaptationConfig {
                cutoff_hz,
                cutoff_bin: None,
                ending_block,
                include_embedding: !skip_embedding,
                mode: mode.mode(),
            };
            let mut rows: Vec<ResultRow> = Vec::new();
            for path in &model {
                let ev = evaluator(load_model(path)?, reference.as_ref())?;
                let adapt = adapt_cfg.resolve(&ev.model)?;
                rows.extend(ev.run_table(&ds, &grid, &adapt)?);
            }
            write_rows(&out, &rows)?;
        }
        Command::SweepEndingBlock {
            model,
            dataset,
            snr,
            order,
            cutoff_hz,
            cutoff_bin,
            noise_seed,
            out,
        } => {
            warn!("single model seed; headline numbers average three");
            let ds = load_dataset(&dataset)?;
            let ev = Evaluator::new(load_model(&model)?)?;
            let corruption = CorruptionSpec {
                order,
                cutoff_hz,
                snr_db: snr,
                noise_seed,
            };
            let template = AdaptationConfig {
                cutoff_hz,
                cutoff_bin,
                ..Default::default()
            }
            .resolve(&ev.model)?;
            let mut rows = vec![ev.baseline(&ds, &corruption)?];
            rows.extend(ev.sweep_ending_block(&ds, &corruption, &template)?);
            write_rows(&out, &rows)?;
        }
        Command::Probe {
            model,
            signal,
            noise_seed,
            out,
        } => {
            let model = load_model(&model)?;
            let signal = match signal.as_str() {
                "sine" => TestSignal::Sine,
                "square" => TestSignal::Square,
                _ => TestSignal::Noise { seed: noise_seed },
            };
            let report = run_probe(&model, signal, model.feature_config())?;
            std::fs::write(&out, report.to_csv())?;
        }
        Command::DumpActivations {
            model,
            clip,
            blocks,
            out,
        } => {
            let model = load_model(&model)?;
            let x = wav::read(&clip).with_context(|| format!("reading {}", clip.display()))?;
            let files = dump_activations(&model, &x, &blocks, &out)?;
            info!("wrote {} activation files to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
