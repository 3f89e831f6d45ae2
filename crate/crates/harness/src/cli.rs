//! The `fddt` command line.
//!
//! Failures print one line on standard error,
//! `error kind=<kind> code=<status>: <message>`, and exit with status 1 for rejected
//! input (usage, config, file format) or 2 for failures while running.
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use fddt_core::gradcheck::{gradient_suite, GradCheckConfig};
use fddt_core::metrics::{evaluate, MetricConfig, ProjectionExtractor, SsimMode};
use fddt_core::spectral::{build_gaussian_pair, decompose, DEFAULT_SIGMA};
use fddt_core::Image;

use crate::config::ExperimentConfig;
use crate::error::{invalid, HarnessError, Result};
use crate::experiments::{run_ablation, run_depth_sweep};
use crate::io::{
    has_extension, images_to_tensor, load_image, save_pgm_with, save_tensor, write_atomic, PgmEncoding,
};
use crate::report::{csv_row, trajectory_csv};
use crate::synth::{generate_synthetic_pairs, TaskFamily};
use crate::train::run_training;

#[derive(Parser, Debug)]
#[command(name = "fddt", version, about = "Frequency-decomposition image translation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split an image into low- and high-frequency components.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        /// Scale the low-pass response by 1/(2 pi sigma^2).
        #[arg(long)]
        normalized: bool,
        /// Keep signed components; PGM outputs then map [-1, 1] onto 0..255.
        #[arg(long)]
        no_abs: bool,
        #[arg(long)]
        out_low: PathBuf,
        #[arg(long)]
        out_high: PathBuf,
    },
    /// Compare two images, or two directories of images matched by file name.
    Metrics {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
        /// Use 11x11 Gaussian-window SSIM instead of whole-image statistics.
        #[arg(long)]
        windowed: bool,
        /// Projection dimension of the Fréchet score (needs at least two images).
        #[arg(long, default_value_t = 16)]
        frechet_dim: usize,
        #[arg(long, default_value_t = crate::train::EXTRACTOR_SEED)]
        frechet_seed: u64,
    },
    /// Run the finite-difference gradient suite; exit 0 iff every check passes.
    Gradcheck {
        #[arg(long, default_value_t = GradCheckConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = GradCheckConfig::default().rel_tol)]
        rel_tol: f64,
    },
    /// Train one model pair from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV destination (standard output when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the run record (config echo plus outcome).
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Baseline against the low, high and full decomposition terms.
    Ablation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every run's trajectory.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// The full decomposition term at several pre-map depths.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated depths; defaults to the config's `sweep_depths`.
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Write a synthetic paired dataset to a directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Task settings (family, task parameters, image_size, seed).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        family: Option<TaskFamily>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, value_enum, default_value_t = DataFormat::Both)]
        format: DataFormat,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Pgm,
    Fdtt,
    Both,
}

impl clap::ValueEnum for TaskFamily {
    fn value_variants<'a>() -> &'a [Self] {
        &[
            TaskFamily::LowShift,
            TaskFamily::EdgeBoost,
            TaskFamily::ContrastMap,
            TaskFamily::Blend,
        ]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| HarnessError::io(Path::new("<stdout>"), e))
        }
    }
}

fn save_image(path: &Path, image: &Image, encoding: PgmEncoding) -> Result<()> {
    if has_extension(path, "fdtt") {
        save_tensor(path, &images_to_tensor(std::slice::from_ref(image))?)
    } else {
        save_pgm_with(path, image, encoding)
    }
}

fn is_image_file(path: &Path) -> bool {
    path.is_file() && (has_extension(path, "pgm") || has_extension(path, "fdtt"))
}

fn load_set(path: &Path) -> Result<(Vec<String>, Vec<Image>)> {
    if !path.is_dir() {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok((vec![name], vec![load_image(path)?]));
    }
    let entries = std::fs::read_dir(path).map_err(|e| HarnessError::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| HarnessError::io(path, e))?.path();
        if is_image_file(&p) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::format(path, "directory holds no .pgm or .fdtt images"));
    }
    let names = files
        .iter()
        .map(|p| p.file_name().expect("listed file").to_string_lossy().into_owned())
        .collect();
    let images = files.iter().map(|p| load_image(p)).collect::<Result<_>>()?;
    Ok((names, images))
}

fn metrics_command(real: &Path, fake: &Path, config: MetricConfig, frechet: (usize, u64)) -> Result<String> {
    let (real_names, real_images) = load_set(real)?;
    let (fake_names, fake_images) = load_set(fake)?;
    if real.is_dir() && real_names != fake_names {
        return Err(invalid(format!(
            "directories hold different file names ({} vs {} images)",
            real_names.len(),
            fake_names.len()
        )));
    }
    let extractor = if real_images.len() >= 2 {
        let first = &real_images[0];
        Some(ProjectionExtractor::new(
            first.height() * first.width() * first.channels(),
            frechet.0,
            frechet.1,
        )?)
    } else {
        None
    };
    let report = evaluate(&real_images, &fake_images, &config, extractor.as_ref())?;
    Ok(format!("{}\n{}\n", crate::report::CSV_HEADER, csv_row("metrics", "-", 0, &report)))
}

fn gen_data(
    out: &Path,
    base: ExperimentConfig,
    overrides: (Option<TaskFamily>, Option<u64>, Option<usize>),
    count: usize,
    format: DataFormat,
) -> Result<()> {
    let mut cfg = base;
    if let Some(f) = overrides.0 {
        cfg.family = f;
    }
    if let Some(s) = overrides.1 {
        cfg.seed = s;
    }
    if let Some(s) = overrides.2 {
        cfg.image_size = s;
    }
    let spec = cfg.task_spec();
    let (a, b) = generate_synthetic_pairs(&spec, count)?;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    if format != DataFormat::Fdtt {
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            save_pgm_with(&out.join(format!("a_{i:04}.pgm")), x, PgmEncoding::Unit)?;
            save_pgm_with(&out.join(format!("b_{i:04}.pgm")), y, PgmEncoding::Unit)?;
        }
    }
    if format != DataFormat::Pgm {
        save_tensor(&out.join("domain_a.fdtt"), &images_to_tensor(&a)?)?;
        save_tensor(&out.join("domain_b.fdtt"), &images_to_tensor(&b)?)?;
    }
    let task = format!(
        "family = {}\nshift = {}\ngain = {}\ngamma = {}\ncutoff = {}\nblend = {}\nimage_size = {}\nseed = {}\n",
        spec.family,
        spec.params.shift,
        spec.params.gain,
        spec.params.gamma,
        spec.params.cutoff,
        cfg.get("blend").expect("known key"),
        spec.size,
        spec.seed
    );
    write_atomic(&out.join("task.txt"), task.as_bytes())
}

/// Executes a parsed command; `Ok(code)` carries non-error exit statuses.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Decompose {
            input,
            sigma,
            normalized,
            no_abs,
            out_low,
            out_high,
        } => {
            let image = load_image(&input)?;
            let pair = build_gaussian_pair(image.height(), image.width(), sigma, normalized)?;
            let (low, high) = decompose(&image, &pair, !no_abs)?;
            let encoding = if no_abs { PgmEncoding::Signed } else { PgmEncoding::Unit };
            save_image(&out_low, &low, encoding)?;
            save_image(&out_high, &high, encoding)?;
            Ok(0)
        }
        Command::Metrics {
            real,
            fake,
            peak,
            windowed,
            frechet_dim,
            frechet_seed,
        } => {
            let config = MetricConfig {
                peak,
                ssim_mode: if windowed { SsimMode::Windowed } else { SsimMode::Global },
                ..MetricConfig::default()
            };
            emit(None, &metrics_command(&real, &fake, config, (frechet_dim, frechet_seed))?)?;
            Ok(0)
        }
        Command::Gradcheck { seed, rel_tol } => {
            let cfg = GradCheckConfig {
                seed,
                rel_tol,
                ..GradCheckConfig::default()
            };
            let reports = gradient_suite(&cfg)?;
            let mut text = String::new();
            for r in &reports {
                text.push_str(&format!(
                    "{} {} probes={} skipped={} max_rel={:.3e} max_abs={:.3e}\n",
                    if r.passed { "pass" } else { "FAIL" },
                    r.name,
                    r.probes,
                    r.skipped,
                    r.max_rel_error,
                    r.max_abs_error
                ));
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            text.push_str(&format!("{} checks, {failed} failed\n", reports.len()));
            emit(None, &text)?;
            Ok(if failed == 0 { 0 } else { 1 })
        }
        Command::Train { config, out, record } => {
            let cfg = ExperimentConfig::load(&config)?;
            let run = run_training(&cfg)?;
            emit(out.as_deref(), &trajectory_csv([(cfg.variant.name(), &run)]))?;
            if let Some(path) = record {
                write_atomic(&path, run.to_text().as_bytes())?;
            }
            match run.failure {
                Some(message) => Err(HarnessError::Diverged {
                    run: format!("{} (seed {})", cfg.variant, cfg.seed),
                    message,
                }),
                None => Ok(0),
            }
        }
        Command::Ablation { config, out, runs } => {
            let cfg = ExperimentConfig::load(&config)?;
            let table = run_ablation(&cfg)?;
            if let Some(path) = runs {
                write_atomic(&path, table.trajectory_csv().as_bytes())?;
            }
            emit(out.as_deref(), &table.summary_csv())?;
            Ok(0)
        }
        Command::Sweep {
            config,
            depths,
            out,
            runs,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let depths = depths.unwrap_or_else(|| cfg.sweep_depths.clone());
            let table = run_depth_sweep(&cfg, &depths)?;
            if let Some(path) = runs {
                write_atomic(&path, table.trajectory_csv().as_bytes())?;
            }
            emit(out.as_deref(), &table.summary_csv())?;
            Ok(0)
        }
        Command::GenData {
            out,
            config,
            family,
            seed,
            size,
            count,
            format,
        } => {
            let base = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            };
            gen_data(&out, base, (family, seed, size), count, format)?;
            Ok(0)
        }
    }
}

/// Single-line error report.
pub fn error_line(kind: &str, code: i32, message: &str) -> String {
    let flat: Vec<&str> = message.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    format!("error kind={kind} code={code}: {}", flat.join(" "))
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{}", e.render());
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid usage").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", 1, first));
            return 1;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", error_line(e.kind(), code, &e.to_string()));
            code
        }
    }
}
