use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use udsgd_lab::config::ExperimentKind;
use udsgd_lab::experiments::paired_mse_difference;
use udsgd_lab::{analyze, diagnose, load_config, run_experiment, ExperimentConfig, LabError, Outcome};

#[derive(Parser)]
#[command(name = "udsgd-lab", version, about = "Unified distributed SGD simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run(Common),
    /// Run the base configuration as a Monte Carlo ensemble.
    Ensemble(Common),
    /// Closed-form covariance and predicted MSE, no simulation.
    Analyze(Common),
    /// Run the configured sweep and print trial-matched MSE gaps between variants.
    Compare(Common),
    /// Schedule growth diagnostics and contraction check of the pattern.
    Diag {
        #[command(flatten)]
        common: Common,
        /// Smoothness order used for the schedule diagnostics.
        #[arg(long, default_value_t = 1)]
        smoothness: u32,
        /// Random draws of the mixing matrix for the contraction check.
        #[arg(long, default_value_t = 2000)]
        draws: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, LabError> {
        let mut cfg = load_config(&self.config)?;
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        for name in udsgd_lab::experiments::non_contracting_patterns(&cfg, 500)? {
            eprintln!("warning: pattern does not contract, consensus will not vanish ({name})");
        }
        Ok(cfg)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, LabError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| LabError::Config(format!("thread pool: {e}")))
    }
}

fn report(out: &Outcome) {
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    for v in &out.variants {
        println!(
            "{}: agents={} n={} mse={:.4e}±{:.1e} trace_hat={:.4e}{}",
            v.name,
            v.agents,
            v.n,
            v.mse.mean,
            v.mse.std_error,
            v.empirical_trace,
            v.trace_v.map(|t| format!(" trace_v={t:.4e}")).unwrap_or_default()
        );
    }
}

fn execute(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.load()?;
            report(&c.pool()?.install(|| run_experiment(&cfg, &c.out))?);
        }
        Command::Ensemble(c) => {
            let mut cfg = c.load()?;
            cfg.experiment = ExperimentKind::Ensemble;
            report(&c.pool()?.install(|| run_experiment(&cfg, &c.out))?);
        }
        Command::Analyze(c) => {
            let cfg = c.load()?;
            report(&analyze(&cfg, &c.out)?);
        }
        Command::Compare(c) => {
            let cfg = c.load()?;
            if !matches!(
                cfg.experiment,
                ExperimentKind::SamplingSweep | ExperimentKind::NetworkIndependence | ExperimentKind::SpeedupSweep
            ) {
                return Err(LabError::Config("compare needs a sweep experiment".into()));
            }
            let out = c.pool()?.install(|| run_experiment(&cfg, &c.out))?;
            report(&out);
            if let Some((first, rest)) = out.variants.split_first() {
                for v in rest {
                    let d = paired_mse_difference(v, first);
                    println!("{} - {}: {:.4e} ± {:.1e}", v.name, first.name, d.mean, d.std_error);
                }
            }
        }
        Command::Diag { common, smoothness, draws } => {
            let cfg = common.load()?;
            report(&diagnose(&cfg, &common.out, smoothness, draws)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
