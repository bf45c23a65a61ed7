//! `roughsde` command line: run experiment blocks from a TOML config and
//! verify finished runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use roughsde_cli::{parse_config, run, CliError, Experiment, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "roughsde", version, about = "Strong-solution numerics for SDEs with rough drift")]
struct Cli {
    /// Scenario configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `out`; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for path batches (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single worker thread. Reductions are index-ordered either way, so
    /// outputs do not depend on this flag; it removes scheduling as a variable.
    #[arg(long, global = true)]
    bit_exact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every block of the config in order.
    Run,
    /// Stopped Euler-Maruyama paths.
    ///
    /// `<name>.csv`: path, final_time, x0..x{d-1}, exited, exit_time, blown_up.
    /// With `global` radii: path, final_time, x0.., escalations, explosive,
    /// blown_up, tau_<R> per radius. `<name>_paths.csv`: path, t, x0.. for
    /// recorded trajectories.
    Simulate,
    /// Backward Dirichlet problem with constant source.
    ///
    /// `<name>.csv`: x0..x{d-1}, u, du0..du{d-1} at t = 0.
    /// `<name>_decay.csv`: t, gap, sup_u, grad_holder.
    Pde,
    /// Transform-based simulation with round-trip, bi-Lipschitz and Theta
    /// audits and an optional direct comparison.
    ///
    /// `<name>.csv`: method (zvonkin|direct), path, final_time, x0, exited, exit_time.
    Zvonkin,
    /// Occupation-time exponent check.
    ///
    /// `<name>.csv`: r, s, lhs, se, ratio, rhs.
    /// `<name>_conditional.csv`: r, s, state, estimate, se, ratio.
    Krylov,
    /// Tied-pair stability ladder.
    ///
    /// `<name>.csv`: p0, eps, m, m_se, n, ratio, stopped_fraction, immediate_stop_fraction.
    Stability,
    /// Generator inequality, supermartingale and explosion-bound checks.
    ///
    /// `<name>_supermartingale.csv`: constant, t, mean, se, v0, pass.
    /// `<name>_explosion.csv`: radius, frequency, bound, pass.
    Lyapunov,
    /// Exponential-moment stabilization check.
    ///
    /// `<name>.csv`: lambda, admissible, size, mean, se.
    /// `<name>_rho.csv`: width, sup_rho.
    ExpMoment,
    /// Verify the manifest checksums of a finished run and print its rollup.
    Report,
}

impl Command {
    fn kind(&self) -> Option<&'static str> {
        match self {
            Command::Simulate => Some("simulate"),
            Command::Pde => Some("pde"),
            Command::Zvonkin => Some("zvonkin"),
            Command::Krylov => Some("krylov"),
            Command::Stability => Some("stability"),
            Command::Lyapunov => Some("lyapunov"),
            Command::ExpMoment => Some("exp_moment"),
            Command::Run | Command::Report => None,
        }
    }
}

fn report(dir: &Path) -> Result<bool, CliError> {
    let manifest = RunManifest::read(dir)?;
    manifest.verify(dir)?;
    println!("config {} seed {}", manifest.config_hash, manifest.seed);
    for b in &manifest.blocks {
        let status = match (&b.error, b.pass) {
            (Some(e), _) => format!("ERROR {e}"),
            (None, Some(true)) => "pass".into(),
            (None, Some(false)) => "FAIL".into(),
            (None, None) => "done".into(),
        };
        println!("{:<24} {:<12} {:>9.2}s  {status}", b.name, b.kind, b.wall_clock_s);
    }
    println!("checksums ok; overall {}", if manifest.pass { "pass" } else { "FAIL" });
    Ok(!manifest.any_error())
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let threads = if cli.bit_exact { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Report = cli.command {
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        return report(&dir);
    }
    let path = cli.config.as_ref().ok_or_else(|| {
        CliError::Config(roughsde_cli::ConfigError::Invalid {
            field: "--config".into(),
            reason: "a config file is required".into(),
        })
    })?;
    let mut config = parse_config(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let manifest = match cli.command.kind() {
        Some(kind) => {
            if !config.experiments.iter().any(|b| b.kind() == kind) {
                return Err(CliError::Config(roughsde_cli::ConfigError::Invalid {
                    field: "experiment".into(),
                    reason: format!("config has no `{kind}` block"),
                }));
            }
            let filter = move |b: &Experiment| b.kind() == kind;
            run(&config, &out, Some(&filter))?
        }
        None => run(&config, &out, None)?,
    };
    println!("wrote {} ({} blocks)", out.display(), manifest.blocks.len());
    for b in &manifest.blocks {
        if let Some(e) = &b.error {
            error!("{}: {e}", b.name);
        }
    }
    Ok(!manifest.any_error())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
