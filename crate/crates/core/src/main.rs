use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};

use osoa::adapt::{train_epochs, AdaptationSchedule, OptimizerConfig, OptimizerKind, OptimizerState};
use osoa::bench::{coder_name, lr_sweep, prepare, run_prepared, Scenario, BITS_PER_PARAMETER};
use osoa::container::{read_container, write_container, CoderKind, ContainerError, OsoaContainer};
use osoa::models::{read_checkpoint, write_checkpoint, CheckpointError, ContextModel, ContextOrder, Model, ToyVae};
use osoa::osoa::{osoa_decode, osoa_encode, OsoaConfig, OsoaError};

const EXIT_FORMAT: u8 = 2;
const EXIT_CHECKSUM: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "osoa", version, about = "Lossless compression with one-shot online adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a base model on a corpus and write a checkpoint.
    Pretrain(PretrainArgs),
    /// Compress a file, adapting the model batch by batch.
    Compress(CompressArgs),
    /// Decompress a container with the same base model.
    Decompress(DecompressArgs),
    /// Print a container's header and chunk table.
    Inspect(InspectArgs),
    /// Run the shifted-Markov benchmark.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CoderArg {
    Ac,
    Rans,
}

impl From<CoderArg> for CoderKind {
    fn from(c: CoderArg) -> Self {
        match c {
            CoderArg::Ac => CoderKind::Ac,
            CoderArg::Rans => CoderKind::Rans,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adamax,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKindArg {
    Order0,
    Order1,
    Vae,
}

#[derive(Args, Clone)]
struct CodingFlags {
    #[arg(long, value_enum, default_value = "rans")]
    coder: CoderArg,
    #[arg(long)]
    bits_back: bool,
    #[arg(long, default_value_t = 16)]
    precision_bits: u32,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 8)]
    chunk_size: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, value_enum, default_value = "adamax")]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1)]
    updates_per_batch: u32,
    /// Last batch (1-based) that still adapts the model; 0 disables adaptation.
    #[arg(long)]
    early_stop: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CodingFlags {
    fn optimizer(&self) -> OptimizerConfig {
        match self.optimizer {
            OptimizerArg::Sgd => OptimizerConfig::sgd(self.lr),
            OptimizerArg::Adamax => OptimizerConfig::adamax(self.lr),
        }
    }

    fn config(&self, background_flush: bool) -> OsoaConfig {
        OsoaConfig {
            coder: self.coder.into(),
            bits_back: self.bits_back,
            precision_bits: self.precision_bits,
            batch_size: self.batch_size,
            chunk_size: self.chunk_size,
            optimizer: self.optimizer(),
            schedule: AdaptationSchedule {
                updates_per_batch: self.updates_per_batch,
                early_stop_step: self.early_stop,
            },
            seed: self.seed,
            background_flush,
        }
    }
}

#[derive(Args)]
struct PretrainArgs {
    corpus: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "order1")]
    model: ModelKindArg,
    /// Alphabet size; every corpus byte must be below it.
    #[arg(long, default_value_t = 256)]
    alphabet: usize,
    /// Latent values of the VAE.
    #[arg(long, default_value_t = 4)]
    latent: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, value_enum, default_value = "adamax")]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    /// Seeds the VAE's random initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompressArgs {
    input: PathBuf,
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    coding: CodingFlags,
    /// Flush FILO chunks on worker threads.
    #[arg(long)]
    background_flush: bool,
    /// Also write each chunk payload to its own file, `<output>.chunk<k>`.
    #[arg(long)]
    explode: bool,
}

#[derive(Args)]
struct DecompressArgs {
    input: PathBuf,
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    input: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    coding: CodingFlags,
    #[arg(long, default_value_t = 16)]
    alphabet: usize,
    #[arg(long, default_value_t = 50_000)]
    pretrain_len: usize,
    #[arg(long, default_value_t = 40_000)]
    target_len: usize,
    /// Strength of the parameter shift between pretraining and target data.
    #[arg(long, default_value_t = 1.5)]
    shift: f64,
    #[arg(long, default_value_t = 10)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 2)]
    finetune_epochs: usize,
    /// Seeds the corpora; `--seed` seeds bits-back only.
    #[arg(long, default_value_t = 2024)]
    corpus_seed: u64,
    #[arg(long)]
    retrain: bool,
    /// Write the per-batch difference series to this file.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Include wall-clock columns (makes the report nondeterministic).
    #[arg(long)]
    timing: bool,
    /// Comma-separated learning rates for an OSOA sweep.
    #[arg(long, value_delimiter = ',')]
    lr_sweep: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain(a) => pretrain(a),
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
        Command::Inspect(a) => inspect(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if let Some(c) = cause.downcast_ref::<ContainerError>() {
            return if c.is_checksum() { EXIT_CHECKSUM } else { EXIT_FORMAT };
        }
        if let Some(c) = cause.downcast_ref::<CheckpointError>() {
            return match c {
                CheckpointError::Checksum { .. } => EXIT_CHECKSUM,
                _ => EXIT_FORMAT,
            };
        }
        if let Some(o) = cause.downcast_ref::<OsoaError>() {
            return match o {
                OsoaError::ChecksumMismatch { .. } | OsoaError::BaseModelMismatch { .. } => EXIT_CHECKSUM,
                OsoaError::Container(c) if c.is_checksum() => EXIT_CHECKSUM,
                _ => EXIT_FORMAT,
            };
        }
    }
    EXIT_FORMAT
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes through a temporary sibling and renames, so a failed run never
/// leaves a partial file at `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    let bytes = read_file(path)?;
    read_checkpoint(&bytes).with_context(|| format!("loading model {}", path.display()))
}

fn to_symbols(bytes: &[u8]) -> Vec<usize> {
    bytes.iter().map(|&b| usize::from(b)).collect()
}

fn pretrain(a: PretrainArgs) -> Result<()> {
    if !(2..=256).contains(&a.alphabet) {
        bail!("alphabet must be between 2 and 256");
    }
    let corpus = to_symbols(&read_file(&a.corpus)?);
    if corpus.is_empty() {
        bail!("corpus is empty");
    }
    if let Some(&s) = corpus.iter().find(|&&s| s >= a.alphabet) {
        bail!("corpus byte {s} is outside the alphabet of {} symbols", a.alphabet);
    }
    let mut model = match a.model {
        ModelKindArg::Order0 => Model::Context(ContextModel::uniform(ContextOrder::Zero, a.alphabet)?),
        ModelKindArg::Order1 => Model::Context(ContextModel::uniform(ContextOrder::One, a.alphabet)?),
        ModelKindArg::Vae => {
            // Uniform logits are a symmetric stationary point; break the
            // symmetry with small seeded noise.
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
            let n = ToyVae::uniform(a.alphabet, a.latent)?.params().len();
            let params = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            Model::Vae(ToyVae::from_params(a.alphabet, a.latent, params)?)
        }
    };
    let config = match a.optimizer {
        OptimizerArg::Sgd => OptimizerConfig::sgd(a.lr),
        OptimizerArg::Adamax => OptimizerConfig::adamax(a.lr),
    };
    config.validate()?;
    if a.batch_size == 0 {
        bail!("batch size must be positive");
    }
    let mut state = OptimizerState::new(config.kind, model.param_count());
    let bpd = train_epochs(&mut model, &mut state, &corpus, a.batch_size, a.epochs, &config)?;
    write_atomic(&a.output, &write_checkpoint(&model))?;
    println!("training bpd: {bpd:.6}");
    println!("parameters: {}", model.param_count());
    println!("checksum: {:#018x}", model.checksum());
    Ok(())
}

fn compress(a: CompressArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = to_symbols(&read_file(&a.input)?);
    let config = a.coding.config(a.background_flush);
    let out = osoa_encode(&data, &model, &config)?;
    let bytes = write_container(&out.container);
    write_atomic(&a.output, &bytes)?;
    if a.explode {
        for (k, chunk) in out.container.chunks.iter().enumerate() {
            let mut name = a.output.as_os_str().to_owned();
            name.push(format!(".chunk{k}"));
            write_atomic(Path::new(&name), &chunk.payload)?;
        }
    }
    let n = data.len() as f64;
    println!("symbols: {}", data.len());
    println!("container bytes: {}", bytes.len());
    println!("theoretical bpd: {:.6}", out.theoretical_bits() / n);
    println!("real bpd: {:.6}", 8.0 * out.container.payload_len() as f64 / n);
    println!("final checksum: {:#018x}", out.final_checksum);
    Ok(())
}

fn decompress(a: DecompressArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let container = read_container(&read_file(&a.input)?).context("reading container")?;
    let out = osoa_decode(&container, &model)?;
    let bytes = out
        .data
        .iter()
        .map(|&s| u8::try_from(s).context("decoded symbol does not fit in a byte"))
        .collect::<Result<Vec<u8>>>()?;
    write_atomic(&a.output, &bytes)?;
    println!("symbols: {}", bytes.len());
    println!("final checksum: {:#018x}", out.final_checksum);
    Ok(())
}

fn describe(container: &OsoaContainer) -> String {
    let h = &container.header;
    let optimizer = match h.optimizer.kind {
        OptimizerKind::Sgd => "sgd",
        OptimizerKind::AdaMax => "adamax",
    };
    let early = h
        .schedule
        .early_stop_step
        .map_or_else(|| "none".to_string(), |s| s.to_string());
    let mut s = String::new();
    s += &format!("coder: {}\n", coder_name(h.coder));
    s += &format!("bits_back: {}\n", h.bits_back);
    s += &format!("precision_bits: {}\n", h.precision_bits);
    s += &format!("batch_size: {}\n", h.batch_size);
    s += &format!("chunk_size: {}\n", h.chunk_size);
    s += &format!("data_length: {}\n", h.data_length);
    s += &format!("batches: {}\n", h.batch_count());
    s += &format!(
        "optimizer: {optimizer} lr={} beta1={} beta2={} epsilon={}\n",
        h.optimizer.learning_rate, h.optimizer.beta1, h.optimizer.beta2, h.optimizer.epsilon
    );
    s += &format!("updates_per_batch: {}\n", h.schedule.updates_per_batch);
    s += &format!("early_stop: {early}\n");
    s += &format!("seed: {}\n", h.seed);
    s += &format!("base_checksum: {:#018x}\n", h.base_checksum);
    s += &format!("chunks: {}\n", container.chunks.len());
    for (k, c) in container.chunks.iter().enumerate() {
        s += &format!(
            "  chunk {k}: batches {}..={} bytes {} param_checksum {:#018x}\n",
            c.meta.first_batch,
            c.meta.last_batch,
            c.payload.len(),
            c.meta.param_checksum
        );
    }
    s
}

fn inspect(a: InspectArgs) -> Result<()> {
    let container = read_container(&read_file(&a.input)?).context("reading container")?;
    print!("{}", describe(&container));
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let scenario = Scenario {
        alphabet: a.alphabet,
        shift: a.shift,
        pretrain_len: a.pretrain_len,
        target_len: a.target_len,
        pretrain_epochs: a.pretrain_epochs,
        finetune_epochs: a.finetune_epochs,
        seed: a.corpus_seed,
        osoa: a.coding.config(false),
        include_retrain: a.retrain,
        ..Scenario::default()
    };
    scenario.osoa.validate()?;
    if scenario.osoa.bits_back {
        bail!("the bench scenario uses context models; bits-back coding is not available");
    }
    let prepared = prepare(&scenario)?;
    let report = run_prepared(&scenario, &prepared)?;
    print!("{}", report.to_text(a.timing));
    println!("model-storage constant: {BITS_PER_PARAMETER} bits/parameter");
    if !a.lr_sweep.is_empty() {
        println!("learning-rate sweep (OSOA theoretical bpd):");
        for (lr, bpd) in lr_sweep(&prepared, &scenario.osoa, &a.lr_sweep)? {
            println!("  lr={lr} bpd={bpd:.4}");
        }
    }
    if let Some(path) = &a.series {
        write_atomic(path, report.series_text().as_bytes())?;
    }
    Ok(())
}
