//! Matched-budget comparisons on the synthetic task.
//!
//! Every run of one comparison uses the same dataset and, per seed, the same
//! frozen base and head initialization. Runs are independent and execute in
//! parallel; results come back in input order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterConfig, AdapterKind};
use crate::dataset::{DatasetConfig, SyntheticDataset};
use crate::error::{Error, Result};
use crate::selection::DEFAULT_DELTA;
use crate::train::{epochs_to_threshold, train, BaseInit, EpochRecord, NetworkShape, ToyNetwork, TrainConfig};

pub const THRESHOLD: f64 = 0.99;

/// One method at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub method: AdapterKind,
    /// `n` for spectral methods, `r` for LoRA.
    pub budget: usize,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl RunSpec {
    pub fn new(method: AdapterKind, budget: usize, delta: Option<f64>, alpha: f64) -> Self {
        Self {
            method,
            budget,
            delta,
            alpha,
        }
    }

    pub fn adapter_config(&self, seed: u64) -> Result<AdapterConfig> {
        AdapterConfig::with_budget(self.method, self.budget, self.delta, self.alpha, seed)
    }

    /// Delta actually used: the explicit one, the default for sDCTFT, or none.
    pub fn effective_delta(&self) -> Option<f64> {
        match self.method {
            AdapterKind::Sdctft => Some(self.delta.unwrap_or(DEFAULT_DELTA)),
            _ => self.delta,
        }
    }

    /// File-name stem unique within a comparison, e.g. `sdctft-b90-d0.7`.
    pub fn label(&self) -> String {
        match self.effective_delta() {
            Some(d) => format!("{}-b{}-d{d}", self.method, self.budget),
            None => format!("{}-b{}", self.method, self.budget),
        }
    }
}

/// Shared settings of one comparison.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSettings {
    #[serde(default)]
    pub network: NetworkShape,
    #[serde(default)]
    pub base: BaseInit,
    #[serde(default)]
    pub train: TrainConfig,
}

/// Outcome of one (spec, seed) run. Failed runs carry `error` and whatever
/// records were produced before the failure (none, currently).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: AdapterKind,
    pub budget: usize,
    pub delta: Option<f64>,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
    pub final_accuracy: Option<f64>,
    pub epochs_to_99: Option<usize>,
    pub adapter_params: usize,
    pub head_params: usize,
    pub seconds: f64,
    pub error: Option<String>,
}

impl RunReport {
    pub fn trainable_params(&self) -> usize {
        self.adapter_params + self.head_params
    }

    pub fn spec(&self) -> RunSpec {
        RunSpec::new(self.method, self.budget, self.delta, self.alpha)
    }

    /// `runs/<label>-s<seed>.csv`, relative to the output directory.
    pub fn curve_path(&self) -> PathBuf {
        Path::new("runs").join(format!("{}-s{}.csv", self.spec().label(), self.seed))
    }
}

/// Trains one adapter on a fresh seeded base.
pub fn run_one(data: &SyntheticDataset, spec: &RunSpec, settings: &BenchSettings, seed: u64) -> RunReport {
    let start = Instant::now();
    let mut report = RunReport {
        method: spec.method,
        budget: spec.budget,
        delta: spec.effective_delta(),
        alpha: spec.alpha,
        learning_rate: settings.train.learning_rate,
        epochs: settings.train.epochs,
        seed,
        records: Vec::new(),
        final_accuracy: None,
        epochs_to_99: None,
        adapter_params: 0,
        head_params: 0,
        seconds: 0.0,
        error: None,
    };
    let outcome = (|| -> Result<Vec<EpochRecord>> {
        let mut net = ToyNetwork::<f64>::new_base(settings.network, settings.base, seed);
        net.attach(&spec.adapter_config(seed)?)?;
        report.adapter_params = net.adapter_param_count();
        report.head_params = net.head_param_count();
        train(&mut net, &data.inputs(), &data.labels, &settings.train)
    })();
    match outcome {
        Ok(records) => {
            report.final_accuracy = records.last().map(|r| r.accuracy);
            report.epochs_to_99 = epochs_to_threshold(&records, THRESHOLD);
            report.records = records;
        }
        Err(e) => {
            log::warn!("{} seed {seed} failed: {e}", spec.label());
            report.error = Some(e.to_string());
        }
    }
    report.seconds = start.elapsed().as_secs_f64();
    log::info!(
        "{} seed {seed}: final accuracy {:?}, epochs to {THRESHOLD}: {:?}",
        spec.label(),
        report.final_accuracy,
        report.epochs_to_99
    );
    report
}

/// One report per (spec, seed), spec-major.
pub fn run_comparison(
    data: &SyntheticDataset,
    specs: &[RunSpec],
    settings: &BenchSettings,
    seeds: &[u64],
) -> Vec<RunReport> {
    let jobs: Vec<(&RunSpec, u64)> = specs.iter().flat_map(|s| seeds.iter().map(move |&seed| (s, seed))).collect();
    jobs.par_iter().map(|&(spec, seed)| run_one(data, spec, settings, seed)).collect()
}

/// Mean final accuracy at one δ, relative to δ = 0.7.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub mean_accuracy: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSweep {
    pub reports: Vec<RunReport>,
    pub table: Vec<DeltaRow>,
}

/// sDCTFT at budget `n` for each δ. `deltas` must contain 0.7, the
/// normalization reference.
pub fn delta_sweep(
    data: &SyntheticDataset,
    n: usize,
    alpha: f64,
    deltas: &[f64],
    settings: &BenchSettings,
    seeds: &[u64],
) -> Result<DeltaSweep> {
    if !deltas.contains(&DEFAULT_DELTA) {
        return Err(Error::InvalidConfig(format!("delta sweep must include {DEFAULT_DELTA}")));
    }
    let specs: Vec<RunSpec> = deltas
        .iter()
        .map(|&d| RunSpec::new(AdapterKind::Sdctft, n, Some(d), alpha))
        .collect();
    let reports = run_comparison(data, &specs, settings, seeds);
    let table = delta_table(&reports);
    Ok(DeltaSweep { reports, table })
}

/// Per-δ mean final accuracy over successful runs, normalized by δ = 0.7.
pub fn delta_table(reports: &[RunReport]) -> Vec<DeltaRow> {
    let mut by_delta: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in reports {
        let d = r.delta.unwrap_or(DEFAULT_DELTA);
        let acc = r.final_accuracy.unwrap_or(0.0);
        match by_delta.iter_mut().find(|(x, _)| *x == d) {
            Some((_, v)) => v.push(acc),
            None => by_delta.push((d, vec![acc])),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let reference = by_delta
        .iter()
        .find(|(d, _)| *d == DEFAULT_DELTA)
        .map(|(_, v)| mean(v))
        .unwrap_or(f64::NAN);
    by_delta
        .iter()
        .map(|(d, v)| DeltaRow {
            delta: *d,
            mean_accuracy: mean(v),
            normalized: mean(v) / reference,
        })
        .collect()
}

/// Writes `epoch,loss,accuracy` rows.
pub fn write_curve<W: std::io::Write>(records: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "accuracy"])?;
    for r in records {
        w.write_record([r.epoch.to_string(), r.loss.to_string(), r.accuracy.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn opt_str<T: ToString>(x: Option<T>, none: &str) -> String {
    x.map_or_else(|| none.to_string(), |v| v.to_string())
}

/// One line per run: method, budget, δ, α, seed, final accuracy, epochs to
/// 99%, trainable parameters, wall time and error.
pub fn write_summary<W: std::io::Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "budget",
        "delta",
        "alpha",
        "seed",
        "final_acc",
        "epochs_to_99",
        "params",
        "seconds",
        "error",
    ])?;
    for r in reports {
        w.write_record([
            r.method.to_string(),
            r.budget.to_string(),
            opt_str(r.delta, ""),
            r.alpha.to_string(),
            r.seed.to_string(),
            opt_str(r.final_accuracy, ""),
            opt_str(r.epochs_to_99, "not reached"),
            r.trainable_params().to_string(),
            format!("{:.3}", r.seconds),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_delta_table<W: std::io::Write>(rows: &[DeltaRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta", "mean_acc", "normalized"])?;
    for r in rows {
        w.write_record([r.delta.to_string(), r.mean_accuracy.to_string(), r.normalized.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Links every artifact of one comparison to the configuration that made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: DatasetConfig,
    pub settings: BenchSettings,
    pub seeds: Vec<u64>,
    pub summary: String,
    pub delta_table: Option<String>,
    /// Curve file for every run, keyed by `<label>-s<seed>`.
    pub runs: BTreeMap<String, String>,
    pub failed: Vec<String>,
}

/// Writes curves, `summary.csv`, the optional `delta.csv` and
/// `manifest.json` below `dir`.
pub fn write_artifacts(
    dir: &Path,
    dataset: &DatasetConfig,
    settings: &BenchSettings,
    seeds: &[u64],
    reports: &[RunReport],
    deltas: Option<&[DeltaRow]>,
) -> Result<Manifest> {
    fs::create_dir_all(dir.join("runs"))?;
    let mut runs = BTreeMap::new();
    let mut failed = Vec::new();
    for r in reports {
        let rel = r.curve_path();
        write_curve(&r.records, fs::File::create(dir.join(&rel))?)?;
        let key = format!("{}-s{}", r.spec().label(), r.seed);
        if r.error.is_some() {
            failed.push(key.clone());
        }
        runs.insert(key, rel.to_string_lossy().replace('\\', "/"));
    }
    write_summary(reports, fs::File::create(dir.join("summary.csv"))?)?;
    let delta_table = match deltas {
        Some(rows) => {
            write_delta_table(rows, fs::File::create(dir.join("delta.csv"))?)?;
            Some("delta.csv".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        dataset: *dataset,
        settings: settings.clone(),
        seeds: seeds.to_vec(),
        summary: "summary.csv".into(),
        delta_table,
        runs,
        failed,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// A δ sweep described in a sweep file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSweepSpec {
    pub budget: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub deltas: Vec<f64>,
}

/// Declarative description of a comparison, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub settings: BenchSettings,
    #[serde(default)]
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub delta_sweep: Option<DeltaSweepSpec>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.runs.is_empty() && self.delta_sweep.is_none() {
            return Err(Error::InvalidConfig("nothing to run: no runs and no delta sweep".into()));
        }
        self.settings.train.validate()?;
        for spec in &self.runs {
            spec.adapter_config(0)?;
        }
        if let Some(ds) = &self.delta_sweep {
            if !ds.deltas.contains(&DEFAULT_DELTA) {
                return Err(Error::InvalidConfig(format!("delta sweep must include {DEFAULT_DELTA}")));
            }
            for &d in &ds.deltas {
                AdapterConfig::sdctft(ds.budget, d, ds.alpha, 0).validate()?;
            }
        }
        Ok(())
    }
}

/// Reports of a whole sweep file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub reports: Vec<RunReport>,
    pub delta_table: Option<Vec<DeltaRow>>,
}

impl SweepOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.reports.iter().all(|r| r.error.is_none())
    }
}

/// Runs the comparison and the δ sweep of a sweep file.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let data = cfg.dataset.generate()?;
    let mut reports = run_comparison(&data, &cfg.runs, &cfg.settings, &cfg.seeds);
    let delta_table = match &cfg.delta_sweep {
        Some(ds) => {
            let sweep = delta_sweep(&data, ds.budget, ds.alpha, &ds.deltas, &cfg.settings, &cfg.seeds)?;
            reports.extend(sweep.reports);
            Some(sweep.table)
        }
        None => None,
    };
    Ok(SweepOutcome { reports, delta_table })
}
