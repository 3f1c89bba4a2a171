use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdctft::accounting::{self, ModelFile};
use sdctft::adapters::AdapterKind;
use sdctft::bench::{self, BenchSettings, RunSpec, SweepConfig};
use sdctft::dataset::DatasetConfig;
use sdctft::selection::DEFAULT_DELTA;
use sdctft::spectral::{ComplexMatrix, SpectralMatrix};
use sdctft::train::{BaseInit, NetworkShape, OptimizerKind, TrainConfig};
use sdctft::{build_selection_plan, dct2, dft2_real, idct2, idft2_real_part, Complex, Matrix};

const BUNDLED_MODELS: &str = include_str!("../../../configs/models.toml");
const OUT_DIR_ENV: &str = "SDCTFT_OUT_DIR";

/// Spectral fine-tuning toolkit: transforms, selection plans, synthetic
/// benchmark runs and parameter accounting.
///
/// Exit codes: 0 success, 1 usage error, 2 runtime failure.
#[derive(Debug, Parser)]
#[command(name = "sdctft", version)]
struct Cli {
    /// Log verbosity on stderr.
    #[arg(long, value_enum, default_value_t = LogLevel::Warn, global = true)]
    log_level: LogLevel,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BasisArg {
    Dct,
    Dft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Sdctft,
    Rdctft,
    Fourierft,
    Lora,
}

impl From<MethodArg> for AdapterKind {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sdctft => AdapterKind::Sdctft,
            MethodArg::Rdctft => AdapterKind::Rdctft,
            MethodArg::Fourierft => AdapterKind::Fourierft,
            MethodArg::Lora => AdapterKind::Lora,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// 2D DCT or DFT of a headerless CSV matrix.
    ///
    /// DFT spectra are written with interleaved real and imaginary columns
    /// (2N columns for an N-column input); `--inverse --basis dft` reads that
    /// layout and writes the real part of the inverse.
    Transform {
        /// Input CSV file.
        input: PathBuf,
        /// Output CSV file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Apply the inverse transform.
        #[arg(long)]
        inverse: bool,
        /// Transform basis.
        #[arg(long, value_enum, default_value_t = BasisArg::Dct)]
        basis: BasisArg,
    },
    /// Selection plan JSON for a weight matrix.
    ///
    /// Without `--weights`, the weight is an N(0, 1) matrix drawn from `--seed`.
    Plan {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Total number of coefficients to select.
        #[arg(long)]
        n: usize,
        /// Energy ratio within each band.
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Headerless CSV weight matrix of shape rows x cols.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Output JSON file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train one method on the synthetic task over several seeds.
    Bench {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// n for spectral methods, r for lora.
        #[arg(long)]
        budget: usize,
        /// Energy ratio (sdctft only).
        #[arg(long)]
        delta: Option<f64>,
        /// Scale on the adapter update.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
        optimizer: OptimizerArg,
        /// Number of seeds; runs use seeds 0..k.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Points per class.
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        /// Cluster standard deviation.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        /// Dataset seed.
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
        /// Artifact directory.
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Run every comparison described in a TOML sweep file.
    Sweep {
        /// Sweep file (see configs/sweep.schema.json).
        config: PathBuf,
        /// Artifact directory.
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
    },
    /// Trainable parameters and storage for LoRA and sDCTFT per model.
    Accounting {
        /// TOML model file; the bundled table when omitted.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Output CSV file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Bad input detected after argument parsing; exits with code 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level.into()).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Transform {
            input,
            output,
            inverse,
            basis,
        } => transform(&input, output.as_deref(), inverse, basis),
        Command::Plan {
            rows,
            cols,
            n,
            delta,
            seed,
            weights,
            output,
        } => plan(rows, cols, n, delta, seed, weights.as_deref(), output.as_deref()),
        Command::Bench {
            method,
            budget,
            delta,
            alpha,
            lr,
            epochs,
            optimizer,
            seeds,
            per_class,
            noise,
            data_seed,
            out,
        } => {
            if delta.is_some() && method != MethodArg::Sdctft {
                return Err(usage("--delta only applies to --method sdctft"));
            }
            let spec = RunSpec::new(method.into(), budget, delta, alpha);
            spec.adapter_config(0).map_err(|e| usage(e.to_string()))?;
            let settings = BenchSettings {
                network: NetworkShape::default(),
                base: BaseInit::default(),
                train: TrainConfig {
                    epochs,
                    learning_rate: lr,
                    optimizer: match optimizer {
                        OptimizerArg::Sgd => OptimizerKind::Sgd,
                        OptimizerArg::Adam => OptimizerKind::Adam,
                    },
                },
            };
            settings.train.validate().map_err(|e| usage(e.to_string()))?;
            let dataset = DatasetConfig {
                per_class,
                noise_sigma: noise,
                seed: data_seed,
            };
            let data = dataset.generate().map_err(|e| usage(e.to_string()))?;
            let seeds: Vec<u64> = (0..seeds).collect();
            if seeds.is_empty() {
                return Err(usage("--seeds must be >= 1"));
            }
            let reports = bench::run_comparison(&data, &[spec], &settings, &seeds);
            bench::write_artifacts(&out, &dataset, &settings, &seeds, &reports, None)?;
            print_reports(&reports)?;
            Ok(exit_for(reports.iter().all(|r| r.error.is_none())))
        }
        Command::Sweep { config, out } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = SweepConfig::from_toml(&text).map_err(|e| usage(format!("{}: {e}", config.display())))?;
            let outcome = bench::run_sweep(&cfg)?;
            bench::write_artifacts(
                &out,
                &cfg.dataset,
                &cfg.settings,
                &cfg.seeds,
                &outcome.reports,
                outcome.delta_table.as_deref(),
            )?;
            print_reports(&outcome.reports)?;
            if let Some(table) = &outcome.delta_table {
                bench::write_delta_table(table, std::io::stdout().lock())?;
            }
            Ok(exit_for(outcome.all_succeeded()))
        }
        Command::Accounting { models, output } => {
            let file = match &models {
                Some(p) => ModelFile::load(p).with_context(|| format!("reading {}", p.display()))?,
                None => ModelFile::from_toml(BUNDLED_MODELS)?,
            };
            let rows = accounting::accounting(&file.model)?;
            let flagged = rows.iter().filter(|r| r.status == accounting::Status::Flagged).count();
            if flagged > 0 {
                log::warn!("{flagged} rows disagree with their reference figures");
            }
            write_output(output.as_deref(), |w| Ok(accounting::write_csv(&rows, w)?))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_for(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn print_reports(reports: &[bench::RunReport]) -> anyhow::Result<()> {
    bench::write_summary(reports, std::io::stdout().lock())?;
    Ok(())
}

fn write_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            body(&mut f)?;
            f.flush()?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            body(&mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Headerless CSV of reals; every row must have the same width.
fn read_matrix(path: &Path) -> anyhow::Result<Matrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field
                    .parse::<f64>()
                    .with_context(|| format!("{}: row {} column {}: not a number: {field:?}", path.display(), i + 1, j + 1))
            })
            .collect::<anyhow::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: empty matrix", path.display());
    }
    let m = Matrix::from_rows(&rows).with_context(|| format!("{}: ragged or empty rows", path.display()))?;
    m.check_finite().with_context(|| format!("{}", path.display()))?;
    Ok(m)
}

fn write_matrix(rows: &[Vec<f64>], w: &mut dyn Write) -> anyhow::Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in rows {
        writer.write_record(row.iter().map(|x| format!("{x:?}")))?;
    }
    writer.flush()?;
    Ok(())
}

fn transform(input: &Path, output: Option<&Path>, inverse: bool, basis: BasisArg) -> anyhow::Result<ExitCode> {
    let m = read_matrix(input)?;
    let rows: Vec<Vec<f64>> = match (basis, inverse) {
        (BasisArg::Dct, false) => dct2(&m)?.coeffs.to_rows(),
        (BasisArg::Dct, true) => idct2(&SpectralMatrix::dct(m))?.to_rows(),
        (BasisArg::Dft, false) => {
            let f = dft2_real(&m)?;
            (0..f.rows())
                .map(|u| (0..f.cols()).flat_map(|v| [f.get(u, v).re, f.get(u, v).im]).collect())
                .collect()
        }
        (BasisArg::Dft, true) => {
            if m.cols() % 2 != 0 {
                bail!("{}: DFT input needs interleaved re,im columns (even width)", input.display());
            }
            let data = m.as_slice().chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect();
            idft2_real_part(&ComplexMatrix::new(m.rows(), m.cols() / 2, data)?)?.to_rows()
        }
    };
    write_output(output, |w| write_matrix(&rows, w))?;
    Ok(ExitCode::SUCCESS)
}

fn plan(
    rows: usize,
    cols: usize,
    n: usize,
    delta: f64,
    seed: u64,
    weights: Option<&Path>,
    output: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    if rows == 0 || cols == 0 {
        return Err(usage("--rows and --cols must be >= 1"));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(usage(format!("--delta must be in [0, 1], got {delta}")));
    }
    let w = match weights {
        Some(p) => {
            let m = read_matrix(p)?;
            if m.shape() != (rows, cols) {
                bail!("{}: expected {rows}x{cols}, found {}x{}", p.display(), m.rows(), m.cols());
            }
            m
        }
        None => Matrix::random_normal(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let plan = build_selection_plan(&dct2(&w)?, n, delta, seed)?;
    plan.validate()?;
    let json = plan.to_json()?;
    write_output(output, |w| {
        writeln!(w, "{json}")?;
        Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}
