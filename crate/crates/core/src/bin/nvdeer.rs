use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nvdeer::analysis::curve::{AxisKind, DeerCurve};
use nvdeer::analysis::density::DEFAULT_MEAN_DEPTH_NM;
use nvdeer::analysis::{estimate_density_with_sem, extract_min, fit_biexponential, fit_lorentzian, split_compare, SplitOptions};
use nvdeer::error::DeerError;
use nvdeer::runner::output::write_atomic;
use nvdeer::runner::{compare_engines, default_threads, resolve_out_dir, run_experiment, EngineKind, ExperimentConfig};

const EXIT_OTHER: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "nvdeer", version, about = "NV-center DEER simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed (overrides the config; recorded by analysis commands).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [env: NVDEER_OUT_DIR].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: logical cores).
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run several engines on identical seeds and report deviations.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated engines.
        #[arg(long, value_delimiter = ',', default_value = "quantum,analytic")]
        engines: Vec<EngineKind>,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Areal density from a minimum signal or from a curve CSV.
    EstimateDensity {
        #[arg(long, conflicts_with = "curve", required_unless_present = "curve")]
        min_signal: Option<f64>,
        /// SEM of the minimum signal.
        #[arg(long, requires = "min_signal")]
        sem: Option<f64>,
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Running-mean width applied to the curve.
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_MEAN_DEPTH_NM)]
        depth_nm: f64,
        #[arg(long)]
        tau_ns: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Lorentzian fit of a frequency-sweep CSV.
    FitLorentzian {
        #[arg(long)]
        curve: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Bi-exponential fit of a two-column (time, value) CSV with header.
    FitRelax {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Density estimates for two acquisition periods.
    SplitCompare {
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MEAN_DEPTH_NM)]
        depth_nm: f64,
        #[arg(long)]
        tau_ns: f64,
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Skip averaging neighboring sweep points.
        #[arg(long)]
        no_pair_average: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &DeerError) -> u8 {
    match e {
        DeerError::Validation(_)
        | DeerError::Parse(_)
        | DeerError::Parameter(_)
        | DeerError::Domain(_)
        | DeerError::Constraint(_)
        | DeerError::Alignment(_) => EXIT_VALIDATION,
        _ => EXIT_OTHER,
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, DeerError> {
    let mut c = ExperimentConfig::from_path(path)?;
    if let Some(s) = seed {
        c.engine.seed = s;
    }
    Ok(c)
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: Option<u64>,
    result: T,
}

/// Print the JSON report unless quiet and, with an output directory,
/// store it as `<name>.json`.
fn emit<T: Serialize>(name: &str, common: &Common, result: T) -> Result<(), DeerError> {
    let text = serde_json::to_string_pretty(&Report { command: name, seed: common.seed, result })?;
    let dir = common.out.clone().or_else(|| std::env::var_os(nvdeer::runner::OUT_DIR_ENV).map(PathBuf::from));
    if let Some(dir) = dir {
        std::fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(format!("{name}.json")), text.as_bytes())?;
    }
    if !common.quiet {
        println!("{text}");
    }
    Ok(())
}

fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>), DeerError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| DeerError::Parse(e.to_string()))?;
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DeerError::Parse(e.to_string()))?;
        let num = |k: usize| -> Result<f64, DeerError> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| DeerError::Parse(format!("row {}: column {} is not a number", i + 1, k + 1)))
        };
        t.push(num(0)?);
        v.push(num(1)?);
    }
    Ok((t, v))
}

fn run(cli: Cli) -> Result<u8, DeerError> {
    match cli.command {
        Command::Simulate { config, threads, common } => {
            let cfg = load_config(&config, common.seed)?;
            let threads = threads.unwrap_or_else(default_threads);
            let outcome = run_experiment(&cfg, common.out.as_deref(), threads)?;
            for f in &outcome.run.failures {
                eprintln!("point {} failed (realization {}): {}", f.sweep_value, f.realization, f.message);
            }
            if !common.quiet {
                println!(
                    "{} engine: {} of {} points, manifest {}",
                    outcome.run.engine,
                    outcome.run.curve.len(),
                    outcome.run.sweep_values.len(),
                    outcome.manifest_path.display()
                );
            }
            Ok(if outcome.run.is_partial() { EXIT_PARTIAL } else { 0 })
        }
        Command::Compare { config, engines, threads, common } => {
            let cfg = load_config(&config, common.seed)?;
            cfg.validate()?;
            let threads = threads.unwrap_or_else(default_threads);
            let report = compare_engines(&cfg, &engines, threads)?;
            let dir = resolve_out_dir(common.out.as_deref(), &cfg);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}.compare.json", cfg.output.label));
            write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            if !common.quiet {
                for c in &report.comparisons {
                    println!(
                        "{} vs {}: max |difference| {:.3e}, max z {:.3}",
                        c.first, c.second, c.max_abs_deviation, c.max_z_score
                    );
                }
                println!("report {}", path.display());
            }
            Ok(if report.is_partial() { EXIT_PARTIAL } else { 0 })
        }
        Command::EstimateDensity { min_signal, sem, curve, window, depth_nm, tau_ns, common } => {
            let (min, sem) = match (min_signal, curve) {
                (Some(m), _) => (m, sem),
                (None, Some(path)) => {
                    let c = DeerCurve::read_csv_path(AxisKind::TsNs, &path)?;
                    let m = extract_min(&c, window)?;
                    (m.min_signal, Some(m.min_signal_sem))
                }
                (None, None) => return Err(DeerError::Parameter("give --min-signal or --curve".into())),
            };
            let est = estimate_density_with_sem(min, sem, depth_nm, tau_ns)?;
            emit("estimate-density", &common, est)?;
            Ok(0)
        }
        Command::FitLorentzian { curve, common } => {
            let c = DeerCurve::read_csv_path(AxisKind::FrequencyMhz, &curve)?;
            let fit = fit_lorentzian(&c)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            emit("fit-lorentzian", &common, fit)?;
            Ok(0)
        }
        Command::FitRelax { data, common } => {
            let (t, v) = read_two_columns(&data)?;
            let fit = fit_biexponential(&t, &v)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            emit("fit-relax", &common, fit)?;
            Ok(0)
        }
        Command::SplitCompare { first, second, depth_nm, tau_ns, window, no_pair_average, common } => {
            let a = DeerCurve::read_csv_path(AxisKind::TsNs, &first)?;
            let b = DeerCurve::read_csv_path(AxisKind::TsNs, &second)?;
            let opts = SplitOptions { pair_average: !no_pair_average, window };
            let cmp = split_compare(&a, &b, depth_nm, tau_ns, &opts)?;
            emit("split-compare", &common, cmp)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
