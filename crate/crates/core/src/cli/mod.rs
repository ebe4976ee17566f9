//! The `dgn` command line: dataset generation, evolutionary search, single
//! model training, evaluation, inference and grid export.
//!
//! Machine-readable results go to stdout as JSON; logs go to stderr.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset_io::{
    confusion, load_dataset, metrics, read_record, split_dataset, GridRecord, SplitDataset,
    DEFAULT_RATIOS,
};
use crate::ds_fusion::{grid_to_ppm, grid_to_tensor};
use crate::neuroevolve::{evolve_with, EvolveConfig, Genome};
use crate::scenario_sim::{
    build_scene_with, generate_dataset, simulate_grid, ContextClass, GenerationSpec,
};
use crate::tensor_net::{
    accuracy, init_parameters, predict, predict_all, read_checkpoint, train_epoch,
    write_checkpoint, Checkpoint, LabelledSet, LossKind, OptimizerKind, OptimizerState,
};

/// Prefix of every error line written to stderr.
pub const ERROR_PREFIX: &str = "dgn: error:";

/// Settings shared by all subcommands, loadable from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub generation: GenerationSpec,
    pub evolve: EvolveConfig,
    pub split_ratios: [f64; 3],
    pub genome: Genome,
    pub epochs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            generation: GenerationSpec::default(),
            evolve: EvolveConfig::default(),
            split_ratios: DEFAULT_RATIOS,
            genome: Genome::default(),
            epochs: 15,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dgn", version, about = "Driving-context classification from fused lidar grids")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (or file, for export-ppm).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate scenes and write a labelled grid dataset.
    Generate(GenerateArgs),
    /// Genetic search over optimizer, loss and FC widths.
    Evolve(EvolveArgs),
    /// Train a single network with a fixed genome.
    Train(TrainArgs),
    /// Confusion matrix and metrics of a checkpoint on one split.
    Eval(EvalArgs),
    /// Classify one grid, from a record file or a freshly simulated scene.
    Infer(InferArgs),
    /// Render a record as a binary PPM image.
    ExportPpm(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    /// Grid cells per side.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Cell edge length in meters.
    #[arg(long)]
    pub resolution: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub fc1: Option<usize>,
    #[arg(long)]
    pub fc2: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Train on at most this many samples of the training split.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, conflicts_with = "simulate", required_unless_present = "simulate")]
    pub record: Option<PathBuf>,
    /// Simulate a scene of this class (name or IC/CR/HW/PL/TJ) and fuse it.
    #[arg(long)]
    pub simulate: Option<ContextClass>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub record: PathBuf,
}

/// Parses arguments, runs the command and maps errors to exit code 1.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{ERROR_PREFIX} {e:#}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let out = cli.common.out.as_deref();
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    let value = match cli.command {
        Command::Generate(a) => cmd_generate(&mut config, &a, require_out(out)?)?,
        Command::Evolve(a) => cmd_evolve(&mut config, &a, require_out(out)?)?,
        Command::Train(a) => cmd_train(&mut config, &a, require_out(out)?)?,
        Command::Eval(a) => cmd_eval(&mut config, &a)?,
        Command::Infer(a) => cmd_infer(&config, &a)?,
        Command::ExportPpm(a) => cmd_export_ppm(&a, require_out(out)?)?,
    };
    serde_json::to_writer(&mut stdout, &value)?;
    writeln!(stdout)?;
    Ok(())
}

fn require_out(out: Option<&Path>) -> Result<&Path> {
    out.context("--out is required for this command")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_generate(config: &mut RunConfig, a: &GenerateArgs, out: &Path) -> Result<serde_json::Value> {
    let g = &mut config.generation;
    g.seed = config.seed;
    if let Some(n) = a.samples_per_class {
        g.samples_per_class = n;
    }
    if a.grid_size.is_some() || a.resolution.is_some() {
        let size = a.grid_size.unwrap_or(g.grid.width);
        let res = a.resolution.unwrap_or(g.grid.resolution);
        g.grid = crate::ds_fusion::GridSpec::centered(size, size, res);
    }
    let manifest = generate_dataset(g, out)?;
    let counts = manifest.class_counts();
    log::info!("wrote {} records to {}", manifest.records.len(), out.display());
    Ok(json!({
        "records": manifest.records.len(),
        "class_counts": class_map(&counts),
    }))
}

fn class_map(counts: &[usize; 5]) -> serde_json::Map<String, serde_json::Value> {
    ContextClass::ALL
        .iter()
        .map(|c| (c.name().to_string(), json!(counts[c.index()])))
        .collect()
}

/// Converts records to network inputs.
pub fn labelled_set(records: &[GridRecord]) -> LabelledSet {
    LabelledSet {
        inputs: records.iter().map(|r| grid_to_tensor(&r.grid)).collect(),
        labels: records.iter().map(|r| r.label.index()).collect(),
    }
}

/// Loads and splits a dataset, adopting its grid geometry so the saved run
/// config can simulate matching inputs.
fn load_split(config: &mut RunConfig, data: &Path) -> Result<SplitDataset> {
    let (manifest, records) =
        load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))?;
    log::info!("loaded {} records ({}x{})", records.len(), manifest.grid.width, manifest.grid.height);
    config.generation.grid = manifest.grid;
    Ok(split_dataset(records, config.split_ratios, config.seed)?)
}

fn network_base(config: &RunConfig, split: &SplitDataset) -> Result<crate::tensor_net::NetworkSpec> {
    let first = split
        .train
        .first()
        .or(split.validation.first())
        .context("dataset is empty")?;
    Ok(config
        .evolve
        .network
        .with_input(first.grid.height(), first.grid.width()))
}

pub fn cmd_evolve(config: &mut RunConfig, a: &EvolveArgs, out: &Path) -> Result<serde_json::Value> {
    let ev = &mut config.evolve;
    ev.seed = config.seed;
    if let Some(v) = a.population {
        ev.population_size = v;
        if ev.elitism >= v {
            ev.elitism = v.saturating_sub(1);
            log::warn!("elitism lowered to {} for a population of {v}", ev.elitism);
        }
    }
    if let Some(v) = a.generations {
        ev.generations = v;
    }
    if let Some(v) = a.epochs {
        ev.epochs_per_individual = v;
    }
    if let Some(v) = a.learning_rate {
        ev.learning_rate = v;
    }
    let split = load_split(config, &a.data.data)?;
    config.evolve.network = network_base(config, &split)?;
    let train = labelled_set(&split.train);
    let val = labelled_set(&split.validation);
    let test = labelled_set(&split.test);

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), config)?;
    let log_path = out.join("evolution.jsonl");
    let mut log_file = BufWriter::new(File::create(&log_path)?);
    let mut log_err = None;
    let outcome = evolve_with(&config.evolve, &train, &val, |stats| {
        let line = serde_json::to_string(stats).map_err(anyhow::Error::from);
        let res = line.and_then(|l| Ok(writeln!(log_file, "{l}").and_then(|_| log_file.flush())?));
        if let Err(e) = res {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.context(format!("writing {}", log_path.display())));
    }

    let mut top = Vec::new();
    for (rank, ind) in outcome.top.iter().enumerate() {
        let spec = ind.network_spec(&config.evolve.network);
        let params = ind.params.clone().context("top individual without weights")?;
        let file = format!("top{}.dgnw", rank + 1);
        write_checkpoint(&out.join(&file), &Checkpoint { spec, params })?;
        top.push(json!({
            "rank": rank + 1,
            "id": ind.id,
            "fitness": ind.fitness,
            "genome": ind.genome,
            "checkpoint": file,
        }));
    }
    write_json(&out.join("top_genomes.json"), &top)?;
    let best = outcome.top.first().context("evolution produced no individuals")?;
    fs::copy(out.join("top1.dgnw"), out.join("best.dgnw"))?;

    let spec = best.network_spec(&config.evolve.network);
    let params = best.params.as_ref().context("best individual without weights")?;
    let test_accuracy = if test.is_empty() {
        None
    } else {
        Some(accuracy(&predict_all(&spec, params, &test, 32)?, &test.labels))
    };
    Ok(json!({
        "best_fitness": best.fitness,
        "best_genome": best.genome,
        "test_accuracy": test_accuracy,
        "generations": outcome.history.len(),
    }))
}

pub fn cmd_train(config: &mut RunConfig, a: &TrainArgs, out: &Path) -> Result<serde_json::Value> {
    let g = &mut config.genome;
    if let Some(v) = a.optimizer {
        g.optimizer = v;
    }
    if let Some(v) = a.loss {
        g.loss = v;
    }
    if let Some(v) = a.fc1 {
        g.fc1_width = v;
    }
    if let Some(v) = a.fc2 {
        g.fc2_width = v;
    }
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        config.evolve.learning_rate = v;
    }
    let mut split = load_split(config, &a.data.data)?;
    if let Some(n) = a.limit {
        split.train.truncate(n);
    }
    let spec = config.genome.apply(&network_base(config, &split)?);
    spec.validate()?;
    let train = labelled_set(&split.train);
    let val = labelled_set(&split.validation);
    if train.is_empty() {
        bail!("training split is empty");
    }

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), config)?;
    let mut params = init_parameters(&spec, crate::rng::derive_seed(config.seed, &[1]))?;
    let mut opt = OptimizerState::new(spec.optimizer, config.evolve.learning_rate, &params.trainable);
    let mut rng = crate::rng::stream(config.seed, &[2]);
    let mut log_file = BufWriter::new(File::create(out.join("train_log.jsonl"))?);
    for epoch in 1..=config.epochs {
        let loss = train_epoch(&spec, &mut params, &mut opt, &train, config.evolve.batch_size, &mut rng)?;
        let val_acc = if val.is_empty() {
            None
        } else {
            Some(accuracy(&predict_all(&spec, &params, &val, 32)?, &val.labels))
        };
        match val_acc {
            Some(acc) => log::info!("epoch {epoch}: loss {loss:.5}, validation accuracy {acc:.4}"),
            None => log::info!("epoch {epoch}: loss {loss:.5}"),
        }
        writeln!(
            log_file,
            "{}",
            json!({"epoch": epoch, "loss": loss, "val_accuracy": val_acc})
        )?;
    }
    log_file.flush()?;

    write_checkpoint(&out.join("model.dgnw"), &Checkpoint { spec, params: params.clone() })?;
    let mut report = serde_json::Map::new();
    for (name, records) in [("validation", &split.validation), ("test", &split.test)] {
        if !records.is_empty() {
            report.insert(name.to_string(), eval_records(&spec, &params, records)?);
        }
    }
    let report = serde_json::Value::Object(report);
    write_json(&out.join("metrics.json"), &report)?;
    Ok(report)
}

fn eval_records(
    spec: &crate::tensor_net::NetworkSpec,
    params: &crate::tensor_net::Parameters,
    records: &[GridRecord],
) -> Result<serde_json::Value> {
    let set = labelled_set(records);
    let preds: Vec<ContextClass> = predict_all(spec, params, &set, 32)?
        .into_iter()
        .map(|p| ContextClass::from_index(p).expect("prediction below class count"))
        .collect();
    let labels: Vec<ContextClass> = records.iter().map(|r| r.label).collect();
    let cm = confusion(&preds, &labels)?;
    let m = metrics(&cm);
    Ok(json!({
        "confusion": cm,
        "accuracy": m.accuracy,
        "recall": m.recall,
        "precision": m.precision,
        "f_measure": m.f_measure,
    }))
}

pub fn cmd_eval(config: &mut RunConfig, a: &EvalArgs) -> Result<serde_json::Value> {
    let ckpt = read_checkpoint(&a.checkpoint)
        .with_context(|| format!("reading checkpoint {}", a.checkpoint.display()))?;
    let split = load_split(config, &a.data.data)?;
    let records = match a.split {
        SplitName::Train => &split.train,
        SplitName::Validation => &split.validation,
        SplitName::Test => &split.test,
    };
    if records.is_empty() {
        bail!("{:?} split is empty", a.split);
    }
    eval_records(&ckpt.spec, &ckpt.params, records)
}

pub fn cmd_infer(config: &RunConfig, a: &InferArgs) -> Result<serde_json::Value> {
    let ckpt = read_checkpoint(&a.checkpoint)
        .with_context(|| format!("reading checkpoint {}", a.checkpoint.display()))?;
    let start = Instant::now();
    let grid = match (&a.record, a.simulate) {
        (Some(path), _) => {
            read_record(path).with_context(|| format!("reading record {}", path.display()))?.grid
        }
        (None, Some(class)) => {
            let gen = &config.generation;
            let scene = build_scene_with(class, config.seed, &gen.class_params);
            simulate_grid(&scene, gen)?
        }
        (None, None) => bail!("one of --record or --simulate is required"),
    };
    let fused = Instant::now();
    let (class, probs) = predict(&ckpt.spec, &ckpt.params, &grid_to_tensor(&grid))?;
    let done = Instant::now();
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    Ok(json!({
        "class": class,
        "probs": probs,
        "timing": {
            "fuse_ms": ms(fused - start),
            "infer_ms": ms(done - fused),
            "total_ms": ms(done - start),
        },
    }))
}

pub fn cmd_export_ppm(a: &ExportArgs, out: &Path) -> Result<serde_json::Value> {
    let record = read_record(&a.record)
        .with_context(|| format!("reading record {}", a.record.display()))?;
    let ppm = grid_to_ppm(&record.grid);
    fs::write(out, &ppm).with_context(|| format!("writing {}", out.display()))?;
    Ok(json!({
        "width": record.grid.width(),
        "height": record.grid.height(),
        "label": record.label,
        "bytes": ppm.len(),
    }))
}
