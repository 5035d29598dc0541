use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use ntc::bench::{bench_run, BenchConfig, BenchMethod};
use ntc::datagen::{correlation_report, gen_synthetic, SynthConfig};
use ntc::ingest::{load_csv, save_csv};
use ntc::neural::{load_model, save_model, train_with_report, MaskSampling, ModelKind, TrainConfig};
use ntc::pipeline::{compress, decompress, CodecSpec, CompressedContainer, Method, Mode, DEFAULT_ADAPTIVE_WINDOW};
use ntc::{Error, Result, Topology, TrafficDataset};

#[derive(Parser)]
#[command(name = "ntc", version, about = "Lossless compression of multi-link traffic time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset; writes the CSV and a `.topo` file next to it.
    Gen(GenArgs),
    /// Train a predictor on a dataset.
    Train(TrainArgs),
    /// Compress a dataset into a container.
    Compress(CompressArgs),
    /// Restore the CSV from a container.
    Decompress(DecompressArgs),
    /// Compare all methods against the DEFLATE baselines.
    Bench(BenchArgs),
    /// Spatial correlation and temporal drift diagnostics.
    Stats(DataArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV.
    input: PathBuf,
    /// Topology file; defaults to the input path with a `.topo` extension.
    #[arg(long)]
    topology: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(0..=100))]
    spatial: u32,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(0..=100))]
    temporal: u32,
    #[arg(long, default_value_t = 1005)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `nsfnet` or a topology file.
    #[arg(long, default_value = "nsfnet")]
    topology: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Network,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Single => Mode::SingleLink,
            ModeArg::Network => Mode::NetworkWide,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Uniform,
    StaticAc,
    AdaptiveAc,
    Rnn,
    Stgnn,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Uniform => Method::Uniform,
            MethodArg::StaticAc => Method::StaticAc,
            MethodArg::AdaptiveAc => Method::AdaptiveAc,
            MethodArg::Rnn => Method::Rnn,
            MethodArg::Stgnn => Method::Stgnn,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// `single` trains the per-link RNN, `network` the ST-GNN.
    #[arg(long, value_enum, default_value = "network")]
    mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Cosine-decay the learning rate to this fraction of `--lr`.
    #[arg(long, default_value_t = 1.0)]
    final_lr: f64,
    #[arg(long, default_value_t = 8)]
    masks: usize,
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CompressArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "stgnn")]
    method: MethodArg,
    /// Histogram pooling for static and adaptive AC.
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    /// Trained model, required for `rnn` and `stgnn`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Adaptive AC history length in bins.
    #[arg(long, default_value_t = DEFAULT_ADAPTIVE_WINDOW)]
    window: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct DecompressArgs {
    input: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output CSV; the topology goes next to it with a `.topo` extension.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    rnn_model: Option<PathBuf>,
    #[arg(long)]
    stgnn_model: Option<PathBuf>,
    /// Comma-separated subset of methods; neural methods without a model are skipped.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_ADAPTIVE_WINDOW)]
    window: usize,
    #[arg(long)]
    no_verify: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn topology_path(data: &Path, explicit: Option<&PathBuf>) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| data.with_extension("topo"))
}

fn load_dataset(args: &DataArgs) -> Result<TrafficDataset> {
    load_csv(&args.input, &topology_path(&args.input, args.topology.as_ref()))
}

fn save_dataset(dataset: &TrafficDataset, path: &Path) -> Result<()> {
    save_csv(dataset, path)?;
    dataset.topology().save(&path.with_extension("topo"))
}

fn run_gen(args: GenArgs) -> Result<()> {
    let topology = match args.topology.as_str() {
        "nsfnet" => Topology::nsfnet(),
        path => Topology::load(Path::new(path))?,
    };
    let config = SynthConfig {
        topology,
        bins: args.bins,
        spatial_pct: args.spatial,
        temporal_pct: args.temporal,
        seed: args.seed,
        ..SynthConfig::default()
    };
    save_dataset(&gen_synthetic(&config)?, &args.output)
}

fn run_train(args: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let kind = match args.mode {
        ModeArg::Single => ModelKind::SingleLinkRnn,
        ModeArg::Network => ModelKind::NetworkStgnn,
    };
    let config = TrainConfig {
        kind,
        w_past: args.window,
        hidden_size: args.hidden,
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        final_lr_fraction: args.final_lr,
        masks_per_window: args.masks,
        mask_sampling: MaskSampling::Bernoulli,
        split_fraction: args.split,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (model, report) = train_with_report(&dataset, &config)?;
    eprintln!(
        "trained on {} windows, eval {} windows, eval loss {:.4} -> {:.4}",
        report.train_windows,
        report.eval_windows,
        report.initial_eval_loss,
        report.best_eval_loss()
    );
    save_model(&model, &args.output)
}

fn run_compress(args: CompressArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let method = Method::from(args.method);
    let model = args.model.as_deref().map(load_model).transpose()?;
    let spec = match method {
        Method::Uniform => CodecSpec::uniform(),
        Method::StaticAc => CodecSpec::static_ac(args.mode.into()),
        Method::AdaptiveAc => CodecSpec::adaptive_ac(args.mode.into(), args.window),
        Method::Rnn | Method::Stgnn => {
            let model = model
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("--model is required for {method}")))?;
            let spec = CodecSpec::neural(model);
            if spec.method != method {
                return Err(Error::ModelMismatch(format!("model kind does not match method {method}")));
            }
            spec
        }
    };
    compress(&dataset, &spec)?.save(&args.output)
}

fn run_decompress(args: DecompressArgs) -> Result<()> {
    let container = CompressedContainer::load(&args.input)?;
    let model = args.model.as_deref().map(load_model).transpose()?;
    let dataset = decompress(&container, model.as_ref())?;
    save_dataset(&dataset, &args.output)
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let rnn = args.rnn_model.as_deref().map(load_model).transpose()?;
    let stgnn = args.stgnn_model.as_deref().map(load_model).transpose()?;
    let methods = match &args.methods {
        None => BenchMethod::all(),
        Some(names) => names
            .iter()
            .map(|n| BenchMethod::parse(n).ok_or_else(|| Error::InvalidArgument(format!("unknown method {n}"))))
            .collect::<Result<_>>()?,
    };
    let config = BenchConfig {
        methods,
        baseline_mode: args.mode.into(),
        adaptive_window: args.window,
        rnn: rnn.as_ref(),
        stgnn: stgnn.as_ref(),
        verify: !args.no_verify,
    };
    let report = bench_run(&dataset, &config)?;
    let text = match args.format {
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    match &args.output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run_stats(args: DataArgs) -> Result<()> {
    let dataset = load_dataset(&args)?;
    print!("{}", correlation_report(&dataset)?.to_text());
    Ok(())
}

fn parse_args() -> std::result::Result<Cli, ExitCode> {
    use clap::error::ErrorKind;
    Cli::try_parse().map_err(|e| {
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        let rendered = e.render().to_string();
        eprint!("{rendered}");
        if !rendered.contains("Usage:") {
            eprintln!("\n{}", Cli::command().render_usage());
        }
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    let outcome = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Train(a) => run_train(a),
        Command::Compress(a) => run_compress(a),
        Command::Decompress(a) => run_decompress(a),
        Command::Bench(a) => run_bench(a),
        Command::Stats(a) => run_stats(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
