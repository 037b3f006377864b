//! Reproducible experiment runs: training sweeps, probe reports, figures,
//! and a manifest of everything written.
//!
//! Every artifact lands under one output directory and is listed (with a
//! relative path) in `manifest.json`. Nothing in an artifact depends on wall
//! time or on where the directory lives, so a re-run with the same
//! configuration reproduces the CSV and JSON files byte for byte.

pub mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_dataset, load_dataset, DatasetSpec, LabelMode, Sample, SyntheticDataset,
};
use crate::error::{Error, Result};
use crate::network::{
    build_network, forward, save_checkpoint, train_with_observer, Arch, EpochRecord, NetworkSpec,
    Parameters, TrainConfig,
};
use crate::probe::{
    energy_field_with, gaussian_reference, kl_div, make_histogram, probe_with, Binning, FieldGroup,
    ProbeOptions, ProbeReport,
};
use plot::{curves_svg, overlay_svg, series_from_rows, Metric, MetricsRow, Panel};

pub const METRICS_HEADER: &str = "arch,seed,epoch,train_loss,train_err,test_err";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Upper bound on the probe KL of a trained prior layer.
pub const PROBE_KL_LIMIT: f64 = 2.0;
/// Allowed distance of a random-label test error from chance.
/// Fitting random labels needs a gentler step than the true-label default:
/// at 1e-4 and above the network collapses to a near-constant predictor
/// before it starts memorizing.
pub const RANDOM_LABEL_LEARNING_RATE: f64 = 1e-5;
pub const CHANCE_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Probe,
    Generalization,
    RandomLabels,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Probe => "probe",
            Experiment::Generalization => "generalization",
            Experiment::RandomLabels => "random_labels",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dataset: DatasetSpec,
    /// Read the dataset from a GSYN file instead of generating it.
    pub dataset_path: Option<PathBuf>,
    pub train: TrainConfig,
    pub archs: Vec<Arch>,
    /// Training seeds; the dataset seed lives in `dataset`.
    pub seeds: Vec<u64>,
    pub binning: Binning,
    pub probe: ProbeOptions,
    /// Test images averaged into each model's summary `kl_f1`.
    pub kl_images: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub overwrite: bool,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 200 + 200 images per class (100 + 100 for random
    /// labels), seeds 1 to 5.
    pub fn desk(experiment: Experiment, output_dir: impl Into<PathBuf>) -> Self {
        let (per_class, label_mode, archs) = match experiment {
            Experiment::Probe => (200, LabelMode::TrueLabels, vec![Arch::Cnn1]),
            Experiment::Generalization => (200, LabelMode::TrueLabels, Arch::ALL.to_vec()),
            Experiment::RandomLabels => (100, LabelMode::RandomLabels, vec![Arch::Cnn1]),
        };
        Self {
            experiment,
            dataset: DatasetSpec {
                label_mode,
                ..DatasetSpec::default().with_per_class(per_class, per_class)
            },
            dataset_path: None,
            train: TrainConfig {
                learning_rate: match experiment {
                    Experiment::RandomLabels => RANDOM_LABEL_LEARNING_RATE,
                    _ => TrainConfig::default().learning_rate,
                },
                ..TrainConfig::default()
            },
            archs,
            seeds: DEFAULT_SEEDS.to_vec(),
            binning: Binning::default(),
            probe: ProbeOptions::default(),
            kl_images: 100,
            output_dir: output_dir.into(),
            overwrite: false,
        }
    }

    /// Restore the full 1000 + 1000 images per class.
    pub fn full(mut self) -> Self {
        self.dataset = self.dataset.with_per_class(1000, 1000);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one seed is required".into(),
            ));
        }
        if self.archs.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one architecture is required".into(),
            ));
        }
        if self.experiment == Experiment::Generalization
            && !Arch::ALL.iter().all(|a| self.archs.contains(a))
        {
            return Err(Error::InvalidArgument(
                "the generalization experiment compares CNN1 with CNN2; select both".into(),
            ));
        }
        if self.kl_images == 0 {
            return Err(Error::InvalidArgument(
                "kl_images must be at least 1".into(),
            ));
        }
        self.train.validate()?;
        self.binning.validate()?;
        if self.dataset_path.is_none() {
            self.dataset.validate()?;
        }
        Ok(())
    }
}

/// Outcome of one `(arch, seed)` training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub arch: Arch,
    pub seed: u64,
    pub epochs: usize,
    pub reached_zero_train_error: bool,
    pub final_train_loss: f64,
    pub final_train_err: f64,
    pub final_test_err: f64,
    /// Mean `KL(reference ‖ F1)` over the first `kl_images` test images.
    pub kl_f1: f64,
    pub probe_index: Option<usize>,
    pub probe_kl_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchMedians {
    pub arch: Arch,
    pub test_err: f64,
    pub kl_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: Experiment,
    pub runs: Vec<RunSummary>,
    pub medians: Vec<ArchMedians>,
    pub checks: Vec<Check>,
}

impl ExperimentSummary {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn medians_for(&self, arch: Arch) -> Option<&ArchMedians> {
        self.medians.iter().find(|m| m.arch == arch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub parameter_counts: Vec<(Arch, usize)>,
    pub artifacts: Vec<ArtifactEntry>,
    pub warnings: Vec<String>,
}

/// Absolute paths of everything a run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub metrics: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub probes: Vec<PathBuf>,
    pub figures: Vec<PathBuf>,
    pub summary_json: PathBuf,
    pub summary_csv: PathBuf,
    pub manifest: PathBuf,
    pub summary: ExperimentSummary,
    pub warnings: Vec<String>,
}

/// Create `dir`, refusing to reuse a non-empty one unless `overwrite`, in
/// which case its contents are removed.
pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Error::InvalidArgument(format!(
                "{} is not a directory",
                dir.display()
            )));
        }
        let entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        if !entries.is_empty() {
            if !overwrite {
                return Err(Error::InvalidArgument(format!(
                    "output directory {} is not empty (pass --overwrite to replace it)",
                    dir.display()
                )));
            }
            for e in entries {
                let p = e.path();
                if e.file_type()?.is_dir() {
                    fs::remove_dir_all(&p)?;
                } else {
                    fs::remove_file(&p)?;
                }
            }
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes files under the output directory and remembers them for the manifest.
struct Writer {
    root: PathBuf,
    entries: Vec<(String, String)>,
}

impl Writer {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    fn record(&mut self, rel: &str, kind: &str) -> PathBuf {
        self.entries.push((rel.to_string(), kind.to_string()));
        self.root.join(rel)
    }

    fn text(&mut self, rel: &str, kind: &str, body: &str) -> Result<PathBuf> {
        fs::write(self.path(rel)?, body)?;
        Ok(self.record(rel, kind))
    }

    fn checkpoint(
        &mut self,
        rel: &str,
        spec: &NetworkSpec,
        params: &Parameters,
    ) -> Result<PathBuf> {
        save_checkpoint(spec, params, self.path(rel)?)?;
        Ok(self.record(rel, "checkpoint"))
    }
}

fn run_tag(arch: Arch, seed: u64) -> String {
    format!("{}-seed{seed}", arch.name().to_lowercase())
}

fn load_or_generate(config: &ExperimentConfig) -> Result<SyntheticDataset> {
    let ds = match &config.dataset_path {
        Some(p) => load_dataset(p)?,
        None => generate_dataset(&config.dataset)?,
    };
    let wanted = match config.experiment {
        Experiment::RandomLabels => LabelMode::RandomLabels,
        _ => LabelMode::TrueLabels,
    };
    if ds.spec.label_mode != wanted {
        return Err(Error::InvalidArgument(format!(
            "the {} experiment needs a {wanted:?} dataset, got {:?}",
            config.experiment.name(),
            ds.spec.label_mode
        )));
    }
    Ok(ds)
}

/// Mean F1 probe KL over the first `n` samples.
fn mean_kl_f1(
    spec: &NetworkSpec,
    params: &Parameters,
    samples: &[Sample],
    n: usize,
    binning: &Binning,
    options: &ProbeOptions,
) -> Result<f64> {
    let reference = gaussian_reference(binning, options.prior_mean, options.prior_variance)?;
    let take = n.min(samples.len());
    let mut total = 0.0;
    for s in &samples[..take] {
        let capture = forward(spec, params, &s.image())?;
        let field = energy_field_with(&capture, FieldGroup::F1, options.field)?;
        total += kl_div(&reference, &make_histogram(&field, binning)?)?;
    }
    Ok(total / take as f64)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct TrainedRun {
    spec: NetworkSpec,
    params: Parameters,
    records: Vec<EpochRecord>,
}

fn train_one(
    config: &ExperimentConfig,
    ds: &SyntheticDataset,
    arch: Arch,
    seed: u64,
) -> Result<TrainedRun> {
    let (spec, params) = build_network(arch, seed);
    let train_config = TrainConfig {
        seed,
        ..config.train.clone()
    };
    info!(
        "training {} seed {seed} on {} images",
        arch.name(),
        ds.train.len()
    );
    let (params, metrics) =
        train_with_observer(&spec, params, &ds.train, &ds.test, &train_config, |r| {
            info!(
                "{} seed {seed} epoch {}: loss {:.4} train_err {:.4} test_err {:.4}",
                arch.name(),
                r.epoch,
                r.train_loss,
                r.train_err,
                r.test_err
            );
        })?;
    Ok(TrainedRun {
        spec,
        params,
        records: metrics.records,
    })
}

fn metrics_csv(rows: &[(Arch, u64, EpochRecord)]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for (arch, seed, r) in rows {
        let _ = writeln!(
            out,
            "{},{seed},{},{},{},{}",
            arch.name(),
            r.epoch,
            r.train_loss,
            r.train_err,
            r.test_err
        );
    }
    out
}

fn summary_csv(runs: &[RunSummary]) -> String {
    let mut out = String::from(
        "arch,seed,epochs,reached_zero_train_error,final_train_loss,final_train_err,final_test_err,kl_f1\n",
    );
    for r in runs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.arch.name(),
            r.seed,
            r.epochs,
            r.reached_zero_train_error,
            r.final_train_loss,
            r.final_train_err,
            r.final_test_err,
            r.kl_f1
        );
    }
    out
}

fn as_rows(rows: &[(Arch, u64, EpochRecord)]) -> Vec<MetricsRow> {
    rows.iter()
        .map(|(a, s, r)| MetricsRow {
            arch: Some(a.name().to_string()),
            seed: Some(*s),
            epoch: r.epoch,
            train_loss: r.train_loss,
            train_err: r.train_err,
            test_err: r.test_err,
        })
        .collect()
}

/// The first correctly classified test image, or the first one with a warning.
fn pick_probe_image(
    run: &TrainedRun,
    test: &[Sample],
    warnings: &mut Vec<String>,
    tag: &str,
) -> Result<usize> {
    for (i, s) in test.iter().enumerate() {
        let capture = forward(&run.spec, &run.params, &s.image())?;
        if capture.predicted() == s.label as usize {
            return Ok(i);
        }
    }
    let msg = format!("{tag}: no correctly classified test image; probing test image 0");
    warn!("{msg}");
    warnings.push(msg);
    Ok(0)
}

fn median_row(runs: &[RunSummary], arch: Arch) -> Option<ArchMedians> {
    let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.arch == arch).collect();
    if mine.is_empty() {
        return None;
    }
    let mut errs: Vec<f64> = mine.iter().map(|r| r.final_test_err).collect();
    let mut kls: Vec<f64> = mine.iter().map(|r| r.kl_f1).collect();
    Some(ArchMedians {
        arch,
        test_err: median(&mut errs),
        kl_f1: median(&mut kls),
    })
}

fn checks_for(experiment: Experiment, runs: &[RunSummary], medians: &[ArchMedians]) -> Vec<Check> {
    let all_zero = runs.iter().all(|r| r.reached_zero_train_error);
    let zero_check = Check {
        name: "zero_train_error".into(),
        passed: all_zero,
        detail: runs
            .iter()
            .map(|r| format!("{} seed {}: {}", r.arch.name(), r.seed, r.final_train_err))
            .collect::<Vec<_>>()
            .join("; "),
    };
    match experiment {
        Experiment::Probe => {
            let kl = runs.first().and_then(|r| r.probe_kl_f1).unwrap_or(f64::NAN);
            vec![
                zero_check,
                Check {
                    name: "probe_kl_f1_below_limit".into(),
                    passed: kl.is_finite() && kl < PROBE_KL_LIMIT,
                    detail: format!("kl_f1 {kl} vs limit {PROBE_KL_LIMIT}"),
                },
            ]
        }
        Experiment::Generalization => {
            let find = |a: Arch| medians.iter().find(|m| m.arch == a);
            let (Some(c1), Some(c2)) = (find(Arch::Cnn1), find(Arch::Cnn2)) else {
                return vec![];
            };
            vec![
                Check {
                    name: "median_test_err_cnn1_le_cnn2".into(),
                    passed: c1.test_err <= c2.test_err,
                    detail: format!("CNN1 {} vs CNN2 {}", c1.test_err, c2.test_err),
                },
                Check {
                    name: "median_kl_f1_cnn1_le_cnn2".into(),
                    passed: c1.kl_f1 <= c2.kl_f1,
                    detail: format!("CNN1 {} vs CNN2 {}", c1.kl_f1, c2.kl_f1),
                },
            ]
        }
        Experiment::RandomLabels => vec![
            zero_check,
            Check {
                name: "test_err_near_chance".into(),
                passed: runs
                    .iter()
                    .all(|r| (r.final_test_err - 0.9).abs() <= CHANCE_BAND),
                detail: runs
                    .iter()
                    .map(|r| format!("seed {}: {}", r.seed, r.final_test_err))
                    .collect::<Vec<_>>()
                    .join("; "),
            },
            Check {
                name: "probe_kl_f1_finite".into(),
                passed: runs
                    .iter()
                    .all(|r| r.probe_kl_f1.is_some_and(f64::is_finite)),
                detail: runs
                    .iter()
                    .map(|r| format!("seed {}: {:?}", r.seed, r.probe_kl_f1))
                    .collect::<Vec<_>>()
                    .join("; "),
            },
        ],
    }
}

/// Train the configured models and write metrics, checkpoints, probe reports,
/// figures, a summary and the manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let ds = load_or_generate(config)?;
    prepare_output_dir(&config.output_dir, config.overwrite)?;
    let mut w = Writer {
        root: config.output_dir.clone(),
        entries: Vec::new(),
    };
    let mut warnings = Vec::new();

    // The probe experiment follows a single model.
    let seeds: &[u64] = match config.experiment {
        Experiment::Probe => &config.seeds[..1],
        _ => &config.seeds,
    };
    let single_probe = config.experiment == Experiment::Probe;

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut checkpoints = Vec::new();
    let mut probes: Vec<(PathBuf, ProbeReport, Arch, u64)> = Vec::new();
    for &seed in seeds {
        for &arch in &config.archs {
            let tag = run_tag(arch, seed);
            let run = train_one(config, &ds, arch, seed)?;
            let last = *run.records.last().expect("epoch 0 is always recorded");
            let reached = run.records.iter().any(|r| r.train_err == 0.0);
            if !reached {
                let msg = format!(
                    "{tag}: training error {} after {} epochs did not reach zero",
                    last.train_err, last.epoch
                );
                warn!("{msg}");
                warnings.push(msg);
            }
            rows.extend(run.records.iter().map(|r| (arch, seed, *r)));
            checkpoints.push(w.checkpoint(
                &format!("checkpoints/{tag}.gckp"),
                &run.spec,
                &run.params,
            )?);

            let index = match config.experiment {
                // Random labels: any test image is as good as another.
                Experiment::RandomLabels => 0,
                _ => pick_probe_image(&run, &ds.test, &mut warnings, &tag)?,
            };
            let mut report = probe_with(
                &run.spec,
                &run.params,
                &ds.test[index].image(),
                &config.binning,
                &config.probe,
            )?;
            report.label = Some(ds.test[index].label as usize);
            let rel = if single_probe {
                "probe.json".to_string()
            } else {
                format!("probes/{tag}.json")
            };
            let path = w.text(&rel, "probe", &report.to_json()?)?;

            runs.push(RunSummary {
                arch,
                seed,
                epochs: last.epoch,
                reached_zero_train_error: reached,
                final_train_loss: last.train_loss,
                final_train_err: last.train_err,
                final_test_err: last.test_err,
                kl_f1: mean_kl_f1(
                    &run.spec,
                    &run.params,
                    &ds.test,
                    config.kl_images,
                    &config.binning,
                    &config.probe,
                )?,
                probe_index: Some(index),
                probe_kl_f1: Some(report.kl_f1),
            });
            probes.push((path, report, arch, seed));
        }
    }

    let metrics = vec![w.text("metrics.csv", "metrics", &metrics_csv(&rows))?];
    let figures = write_figures(&mut w, config, &rows, &probes)?;

    let medians: Vec<ArchMedians> = config
        .archs
        .iter()
        .filter_map(|&a| median_row(&runs, a))
        .collect();
    let summary = ExperimentSummary {
        experiment: config.experiment,
        checks: checks_for(config.experiment, &runs, &medians),
        runs,
        medians,
    };
    for c in summary.failed_checks() {
        info!("check {} failed: {}", c.name, c.detail);
    }
    let summary_json = w.text(
        "summary.json",
        "summary",
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    let summary_csv_path = w.text("summary.csv", "summary", &summary_csv(&summary.runs))?;

    let mut artifacts: Vec<ArtifactEntry> = w
        .entries
        .iter()
        .map(|(p, k)| ArtifactEntry {
            path: p.clone(),
            kind: k.clone(),
        })
        .collect();
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: config.experiment,
        config: config.clone(),
        seeds: seeds.to_vec(),
        parameter_counts: config
            .archs
            .iter()
            .map(|&a| (a, build_network(a, 0).0.parameter_count()))
            .collect(),
        artifacts,
        warnings: warnings.clone(),
    };
    let manifest_path = config.output_dir.join(MANIFEST_FILE);
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    Ok(RunArtifacts {
        output_dir: config.output_dir.clone(),
        metrics,
        checkpoints,
        probes: probes.into_iter().map(|p| p.0).collect(),
        figures,
        summary_json,
        summary_csv: summary_csv_path,
        manifest: manifest_path,
        summary,
        warnings,
    })
}

fn write_figures(
    w: &mut Writer,
    config: &ExperimentConfig,
    rows: &[(Arch, u64, EpochRecord)],
    probes: &[(PathBuf, ProbeReport, Arch, u64)],
) -> Result<Vec<PathBuf>> {
    let mut figures = Vec::new();
    let table = as_rows(rows);
    for (metric, name, title) in [
        (Metric::TestErr, "test-error", "Testing error"),
        (Metric::TrainErr, "train-error", "Training error"),
    ] {
        let svg = curves_svg(
            title,
            metric.column(),
            &series_from_rows(&table, metric, "run"),
        )?;
        figures.push(w.text(&format!("figures/{name}.svg"), "figure", &svg)?);
    }

    let reference = (config.probe.prior_mean, config.probe.prior_variance);
    let report_label = |r: &ProbeReport, arch: Arch, seed: u64, panel: &str| {
        format!(
            "{} seed {seed} {panel} (KL {:.3})",
            arch.name(),
            if panel == "f1" { r.kl_f1 } else { r.kl_input }
        )
    };
    match config.experiment {
        Experiment::Probe => {
            let (_, r, arch, seed) = &probes[0];
            for (panel, hist) in [
                (Panel::Input, &r.input),
                (Panel::F1, &r.f1),
                (Panel::F2, &r.f2),
            ] {
                let label = match panel {
                    Panel::F2 => format!("{} seed {seed} f2", arch.name()),
                    _ => report_label(r, *arch, *seed, panel.name()),
                };
                let svg = overlay_svg(
                    &format!("{} histogram", panel.name()),
                    (&label, hist),
                    &[],
                    reference,
                )?;
                figures.push(w.text(
                    &format!("figures/probe-{}.svg", panel.name()),
                    "figure",
                    &svg,
                )?);
            }
        }
        Experiment::Generalization | Experiment::RandomLabels => {
            // One F1 overlay per seed, all architectures on shared axes.
            for &seed in probes
                .iter()
                .map(|p| &p.3)
                .collect::<std::collections::BTreeSet<_>>()
            {
                let mine: Vec<_> = probes.iter().filter(|p| p.3 == seed).collect();
                let (_, first, arch, _) = mine[0];
                let steps: Vec<(String, _)> = mine[1..]
                    .iter()
                    .map(|(_, r, a, s)| (report_label(r, *a, *s, "f1"), &r.f1))
                    .collect();
                let svg = overlay_svg(
                    &format!("F1 histogram, seed {seed}"),
                    (&report_label(first, *arch, seed, "f1"), &first.f1),
                    &steps,
                    reference,
                )?;
                figures.push(w.text(&format!("figures/f1-seed{seed}.svg"), "figure", &svg)?);
            }
        }
    }
    Ok(figures)
}

pub fn run_probe_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    expect_kind(config, Experiment::Probe)?;
    run_experiment(config)
}

pub fn run_generalization_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    expect_kind(config, Experiment::Generalization)?;
    run_experiment(config)
}

pub fn run_random_label_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    expect_kind(config, Experiment::RandomLabels)?;
    run_experiment(config)
}

fn expect_kind(config: &ExperimentConfig, kind: Experiment) -> Result<()> {
    if config.experiment != kind {
        return Err(Error::InvalidArgument(format!(
            "config is for the {} experiment, not {}",
            config.experiment.name(),
            kind.name()
        )));
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(
        dir.join(MANIFEST_FILE),
    )?)?)
}
