//! `hbtc`: generate, complete, evaluate and sweep harmonic tensor completion
//! problems.
//!
//! Exit codes: 0 on success, 2 for malformed configuration, arguments or
//! files, 3 when the solver aborts numerically.

mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hbtc_core::{io, rlne, run_sweep, solve, synth, sweep};

use config::{ConfigFile, Overrides};

const THREADS_ENV: &str = "HBTC_THREADS";

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<hbtc_core::Error> for CliError {
    fn from(e: hbtc_core::Error) -> Self {
        match e {
            hbtc_core::Error::Numerical { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hbtc", version, about = "Harmonic block-term tensor completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides HBTC_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Factor update: `als` or `gn`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write clean.ct3, noisy.ct3, mask.cm3 and factors.btd1.
    Gen(Common),
    /// Complete a tensor; writes completed.ct3, factors.btd1 and trace.csv.
    Complete {
        /// Observed tensor (CT3).
        data: PathBuf,
        /// Observation mask (CM3).
        mask: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the RLNE of an estimate against a reference tensor.
    Eval { estimate: PathBuf, clean: PathBuf },
    /// Run a sweep; writes rows.csv and aggregates.csv.
    Sweep(Common),
}

fn load_config(c: &Common) -> Result<ConfigFile, CliError> {
    let mut cfg = ConfigFile::load(c.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: c.seed,
        backend: c.backend.clone(),
        lambda: c.lambda,
        beta0: c.beta0,
        rho: c.rho,
        iters: c.iters,
    });
    Ok(cfg)
}

fn threads(c: &Common) -> Result<Option<usize>, CliError> {
    let n = match c.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| CliError::Input(format!("{THREADS_ENV}: expected a positive integer, got `{v}`")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Input("threads: must be at least 1".into()));
    }
    Ok(n)
}

fn out_dir(c: &Common) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&c.out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", c.out.display())))?;
    Ok(&c.out)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn load_with_name<T>(path: &Path, f: impl FnOnce(&Path) -> hbtc_core::Result<T>) -> Result<T, CliError> {
    f(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_gen(c: &Common) -> Result<(), CliError> {
    let gen = load_config(c)?.gen_config()?;
    let dir = out_dir(c)?;
    let truth = synth::generate(&gen)?;
    io::save_tensor(dir.join("clean.ct3"), &truth.clean)?;
    io::save_tensor(dir.join("noisy.ct3"), &truth.noisy)?;
    io::save_mask(dir.join("mask.cm3"), &truth.mask)?;
    io::save_factors(dir.join("factors.btd1"), &truth.factors)?;
    println!(
        "dims {:?}, {} observed, snr {} dB -> {}",
        gen.dims,
        truth.mask.observed_count(),
        gen.snr_db,
        dir.display()
    );
    Ok(())
}

fn cmd_complete(data: &Path, mask: &Path, c: &Common) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    let solver = cfg.solver_config()?;
    let y = load_with_name(data, |p| io::load_tensor(p))?;
    let w = load_with_name(mask, |p| io::load_mask(p))?;
    let structure = cfg.structure()?;
    let dir = out_dir(c)?;
    let run = || solve(&y, &w, &structure, &solver);
    let report = match threads(c)? {
        Some(n) => rayon_pool(n)?.install(run)?,
        None => run()?,
    };
    io::save_tensor(dir.join("completed.ct3"), &report.completed)?;
    io::save_factors(dir.join("factors.btd1"), &report.factors)?;
    report.write_trace_csv(create(&dir.join("trace.csv"))?)?;
    println!(
        "{} iterations, converged: {}, f1 {:.6e}",
        report.iterations_run,
        report.converged,
        report.trace.last().map_or(f64::NAN, |r| r.f1)
    );
    Ok(())
}

fn rayon_pool(n: usize) -> Result<hbtc_core::sweep::ThreadPool, CliError> {
    hbtc_core::sweep::thread_pool(Some(n)).map_err(CliError::from)
}

fn cmd_eval(estimate: &Path, clean: &Path) -> Result<(), CliError> {
    let e = load_with_name(estimate, |p| io::load_tensor(p))?;
    let t = load_with_name(clean, |p| io::load_tensor(p))?;
    println!("{:.6}", rlne(&e, &t)?);
    Ok(())
}

fn cmd_sweep(c: &Common) -> Result<(), CliError> {
    let spec = load_config(c)?.sweep_spec()?;
    let dir = out_dir(c)?;
    let result = run_sweep(&spec, threads(c)?)?;
    sweep::write_rows_csv(&result.rows, create(&dir.join("rows.csv"))?)?;
    sweep::write_aggregates_csv(&result.aggregates, create(&dir.join("aggregates.csv"))?)?;
    for a in &result.aggregates {
        println!("{:8} {:>8} mean {:.4} std {:.4}", a.method.label(), a.swept_value, a.mean_rlne, a.std_rlne);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(c) => cmd_gen(c),
        Command::Complete { data, mask, common } => cmd_complete(data, mask, common),
        Command::Eval { estimate, clean } => cmd_eval(estimate, clean),
        Command::Sweep(c) => cmd_sweep(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hbtc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
