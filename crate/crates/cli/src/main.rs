use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use gibbs_lens::data::{generate_dataset, load_dataset, save_dataset, DatasetSpec, LabelMode};
use gibbs_lens::harness::plot::{render_figure, FigureKind, Metric, Panel, PlotOptions};
use gibbs_lens::harness::{
    prepare_output_dir, run_experiment, Experiment, ExperimentConfig, RunArtifacts, DEFAULT_SEEDS,
};
use gibbs_lens::network::{
    build_network, load_checkpoint, save_checkpoint, train_with_observer, Arch, TrainConfig,
};
use gibbs_lens::probe::{
    probe_with, Binning, ChannelAggregation, EnergySign, FieldOptions, ProbeOptions,
};

/// Exit status for a failed `--assert` check.
const ASSERTION_FAILED: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "gibbs-lens",
    version,
    about = "Read CNN layers as Gibbs distributions on synthetic digits"
)]
struct Cli {
    /// Seed: dataset seed for gen-data, training seed for train, a single
    /// training seed for the experiments (overrides --seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file or directory (default depends on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Use 1000 training and 1000 testing images per class.
    #[arg(long, global = true)]
    full: bool,

    /// Replace the contents of a non-empty output directory.
    #[arg(long, global = true)]
    overwrite: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset file (GSYN).
    GenData(GenDataArgs),
    /// Train one network and save its checkpoint and metrics.
    Train(TrainArgs),
    /// Probe one image with a checkpoint, or run the probe experiment.
    Probe(ProbeArgs),
    /// Compare CNN1 and CNN2 across seeds.
    ExpGeneralization(ExperimentArgs),
    /// Train CNN1 on randomly labeled data.
    ExpRandomLabels(ExperimentArgs),
    /// Render curves or histogram overlays to SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Read the dataset from a GSYN file instead of generating it.
    #[arg(long)]
    data: Option<PathBuf>,

    /// Seed of the generated dataset.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,

    /// Training and testing images per class (desk default depends on the command).
    #[arg(long)]
    per_class: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct HyperArgs {
    /// Learning rate (default 1e-4; 1e-5 for exp-random-labels).
    #[arg(long)]
    lr: Option<f64>,

    /// Momentum (default 0.9).
    #[arg(long)]
    momentum: Option<f64>,

    /// Mini-batch size (default 64).
    #[arg(long)]
    batch_size: Option<usize>,

    /// Epoch limit (default 200).
    #[arg(long)]
    max_epochs: Option<usize>,

    /// Keep training after the training error reaches zero.
    #[arg(long)]
    no_early_stop: bool,
}

impl HyperArgs {
    /// Apply the given flags on top of `base`.
    fn config(&self, base: TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr.unwrap_or(base.learning_rate),
            momentum: self.momentum.unwrap_or(base.momentum),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            seed,
            stop_at_zero_train_error: !self.no_early_stop,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SignArg {
    Response,
    Energy,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AggregationArg {
    Sum,
    Mean,
}

#[derive(Args, Debug, Clone)]
struct BinArgs {
    #[arg(long, default_value_t = Binning::default().lo, allow_hyphen_values = true)]
    bin_lo: f64,

    #[arg(long, default_value_t = Binning::default().hi, allow_hyphen_values = true)]
    bin_hi: f64,

    #[arg(long, default_value_t = Binning::default().bin_count)]
    bins: usize,

    #[arg(long, default_value_t = Binning::default().smoothing_epsilon)]
    epsilon: f64,

    /// Histogram filter responses or the energy (their negation).
    #[arg(long, value_enum, default_value = "response")]
    energy_sign: SignArg,

    /// How channels are combined at each location.
    #[arg(long, value_enum, default_value = "sum")]
    aggregation: AggregationArg,
}

impl BinArgs {
    fn binning(&self) -> Result<Binning> {
        Ok(Binning::new(
            self.bin_lo,
            self.bin_hi,
            self.bins,
            self.epsilon,
        )?)
    }

    fn options(&self) -> ProbeOptions {
        ProbeOptions {
            field: FieldOptions {
                aggregation: match self.aggregation {
                    AggregationArg::Sum => ChannelAggregation::Sum,
                    AggregationArg::Mean => ChannelAggregation::Mean,
                },
                sign: match self.energy_sign {
                    SignArg::Response => EnergySign::Response,
                    SignArg::Energy => EnergySign::Energy,
                },
            },
            ..ProbeOptions::default()
        }
    }
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Training and testing images per class (default 200, or 1000 with --full).
    #[arg(long)]
    per_class: Option<usize>,

    /// Draw labels uniformly at random instead of using the drawn class.
    #[arg(long)]
    random_labels: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value = "CNN1")]
    arch: Arch,

    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Training seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    seeds: Vec<u64>,

    /// Test images averaged into each model's reported KL.
    #[arg(long, default_value_t = 100)]
    kl_images: usize,

    /// Exit with status 2 if any experiment check fails.
    #[arg(long = "assert")]
    assert_checks: bool,

    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    hyper: HyperArgs,

    #[command(flatten)]
    bins: BinArgs,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    /// Probe a single image with this checkpoint instead of running the experiment.
    #[arg(long, requires = "data")]
    checkpoint: Option<PathBuf>,

    /// Test-split index of the image to probe.
    #[arg(long, default_value_t = 0, requires = "checkpoint")]
    index: usize,

    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum KindArg {
    Curves,
    Overlay,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MetricArg {
    TrainLoss,
    TrainErr,
    TestErr,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PanelArg {
    Input,
    F1,
    F2,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(value_enum)]
    kind: KindArg,

    /// Metrics CSVs for curves, probe JSONs for overlays.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    #[arg(long, value_enum, default_value = "test-err")]
    metric: MetricArg,

    #[arg(long, value_enum, default_value = "f1")]
    panel: PanelArg,

    #[arg(long)]
    title: Option<String>,
}

fn dataset_spec(
    per_class: Option<usize>,
    full: bool,
    desk: usize,
    seed: u64,
    labels: LabelMode,
) -> DatasetSpec {
    let n = per_class.unwrap_or(if full { 1000 } else { desk });
    DatasetSpec {
        seed,
        label_mode: labels,
        ..DatasetSpec::default().with_per_class(n, n)
    }
}

fn gen_data(cli: &Cli, args: &GenDataArgs) -> Result<()> {
    let labels = if args.random_labels {
        LabelMode::RandomLabels
    } else {
        LabelMode::TrueLabels
    };
    let spec = dataset_spec(args.per_class, cli.full, 200, cli.seed.unwrap_or(0), labels);
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("synthetic.gsyn"));
    refuse_existing_file(&out, cli.overwrite)?;
    let ds = generate_dataset(&spec)?;
    save_dataset(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
    info!("wrote {} images to {}", ds.len(), out.display());
    Ok(())
}

fn refuse_existing_file(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        return Err(gibbs_lens::Error::InvalidArgument(format!(
            "{} exists (pass --overwrite to replace it)",
            path.display()
        ))
        .into());
    }
    Ok(())
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let ds = match &args.data.data {
        Some(p) => load_dataset(p).with_context(|| format!("reading {}", p.display()))?,
        None => generate_dataset(&dataset_spec(
            args.data.per_class,
            cli.full,
            200,
            args.data.data_seed,
            LabelMode::TrueLabels,
        ))?,
    };
    let seed = cli.seed.unwrap_or(0);
    let config = args.hyper.config(TrainConfig::default(), seed);
    config.validate()?;
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs/train"));
    prepare_output_dir(&out, cli.overwrite)?;

    let (spec, params) = build_network(args.arch, seed);
    info!(
        "{} has {} parameters",
        args.arch.name(),
        spec.parameter_count()
    );
    let (params, metrics) =
        train_with_observer(&spec, params, &ds.train, &ds.test, &config, |r| {
            info!(
                "epoch {}: loss {:.4} train_err {:.4} test_err {:.4}",
                r.epoch, r.train_loss, r.train_err, r.test_err
            );
        })?;
    std::fs::write(out.join("metrics.csv"), metrics.to_csv())?;
    save_checkpoint(&spec, &params, out.join("checkpoint.gckp"))?;
    info!("wrote {}", out.display());
    Ok(())
}

fn experiment_config(
    cli: &Cli,
    kind: Experiment,
    args: &ExperimentArgs,
) -> Result<ExperimentConfig> {
    let default_out = match kind {
        Experiment::Probe => "runs/probe",
        Experiment::Generalization => "runs/generalization",
        Experiment::RandomLabels => "runs/random-labels",
    };
    let mut config =
        ExperimentConfig::desk(kind, cli.out.clone().unwrap_or_else(|| default_out.into()));
    if cli.full {
        config = config.full();
    }
    if let Some(n) = args.data.per_class {
        config.dataset = config.dataset.with_per_class(n, n);
    }
    config.dataset.seed = args.data.data_seed;
    config.dataset_path = args.data.data.clone();
    config.seeds = match cli.seed {
        Some(s) => vec![s],
        None => args.seeds.clone(),
    };
    config.train = args.hyper.config(config.train.clone(), 0);
    config.binning = args.bins.binning()?;
    config.probe = args.bins.options();
    config.kl_images = args.kl_images;
    config.overwrite = cli.overwrite;
    config.validate()?;
    Ok(config)
}

/// Returns whether every requested check passed.
fn experiment(cli: &Cli, kind: Experiment, args: &ExperimentArgs) -> Result<bool> {
    let config = experiment_config(cli, kind, args)?;
    let artifacts = run_experiment(&config)?;
    report(&artifacts);
    Ok(!args.assert_checks || artifacts.summary.failed_checks().is_empty())
}

fn report(artifacts: &RunArtifacts) {
    for r in &artifacts.summary.runs {
        println!(
            "{} seed {}: epochs {} train_err {} test_err {} kl_f1 {:.4}",
            r.arch.name(),
            r.seed,
            r.epochs,
            r.final_train_err,
            r.final_test_err,
            r.kl_f1
        );
    }
    for m in &artifacts.summary.medians {
        println!(
            "median {}: test_err {} kl_f1 {:.4}",
            m.arch.name(),
            m.test_err,
            m.kl_f1
        );
    }
    for c in &artifacts.summary.checks {
        println!(
            "check {}: {} ({})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.detail
        );
    }
    for w in &artifacts.warnings {
        println!("warning: {w}");
    }
    println!("manifest: {}", artifacts.manifest.display());
}

fn probe(cli: &Cli, args: &ProbeArgs) -> Result<bool> {
    let Some(checkpoint) = &args.checkpoint else {
        return experiment(cli, Experiment::Probe, &args.experiment);
    };
    let data = args
        .experiment
        .data
        .data
        .as_ref()
        .expect("clap enforces --data");
    let (spec, params) =
        load_checkpoint(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let ds = load_dataset(data).with_context(|| format!("reading {}", data.display()))?;
    let sample = ds.test.get(args.index).ok_or_else(|| {
        gibbs_lens::Error::InvalidArgument(format!(
            "test index {} out of range (split has {} images)",
            args.index,
            ds.test.len()
        ))
    })?;
    let bins = &args.experiment.bins;
    let mut report = probe_with(
        &spec,
        &params,
        &sample.image(),
        &bins.binning()?,
        &bins.options(),
    )?;
    report.label = Some(sample.label as usize);
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("probe.json"));
    refuse_existing_file(&out, cli.overwrite)?;
    std::fs::write(&out, report.to_json()?)?;
    println!(
        "label {} predicted {} kl_input {:.4} kl_f1 {:.4}",
        sample.label, report.predicted, report.kl_input, report.kl_f1
    );
    Ok(true)
}

fn plot(cli: &Cli, args: &PlotArgs) -> Result<()> {
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("figure.svg"));
    let options = PlotOptions {
        metric: match args.metric {
            MetricArg::TrainLoss => Metric::TrainLoss,
            MetricArg::TrainErr => Metric::TrainErr,
            MetricArg::TestErr => Metric::TestErr,
        },
        panel: match args.panel {
            PanelArg::Input => Panel::Input,
            PanelArg::F1 => Panel::F1,
            PanelArg::F2 => Panel::F2,
        },
        title: args.title.clone(),
    };
    let kind = match args.kind {
        KindArg::Curves => FigureKind::Curves,
        KindArg::Overlay => FigureKind::HistogramOverlay,
    };
    render_figure(kind, &args.inputs, &out, &options)?;
    info!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    gibbs_lens::configure_threads()?;
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a).map(|_| true),
        Command::Train(a) => train(cli, a).map(|_| true),
        Command::Probe(a) => probe(cli, a),
        Command::ExpGeneralization(a) => experiment(cli, Experiment::Generalization, a),
        Command::ExpRandomLabels(a) => experiment(cli, Experiment::RandomLabels, a),
        Command::Plot(a) => plot(cli, a).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: experiment checks failed");
            ExitCode::from(ASSERTION_FAILED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
