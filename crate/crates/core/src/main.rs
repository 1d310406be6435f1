use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sdd_core::harness::{
    compare, experiment_grid, run_experiment, summary_table, train_policy, ExperimentConfig, OUT_DIR_ENV,
};
use sdd_core::steady_state::{analyze, StylizedInstance};
use sdd_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sdd", version, about = "Same-day delivery with endogenous demand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the network of a learned policy and save its weights.
    Train(Common),
    /// Evaluate one policy on one setting.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Train missing weights instead of failing.
        #[arg(long)]
        train: bool,
    },
    /// Evaluate one policy on all 33 grid settings.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: bool,
    },
    /// Solve the two-region stylized model.
    SteadyState {
        #[arg(long = "T")]
        total_resource: f64,
        #[arg(long = "A")]
        area: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long = "M1")]
        m1: f64,
        #[arg(long = "M2")]
        m2: f64,
    },
    /// Relative improvement of one artifact set over another.
    Compare { policy_dir: PathBuf, baseline_dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set train.episodes=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    geography: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    /// capacitated or uncapacitated
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    r_bar: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let flags: [(&str, Option<String>); 11] = [
            ("geography", self.geography.clone()),
            ("policy", self.policy.clone()),
            ("model", self.model.clone()),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("r_bar", self.r_bar.map(|v| v.to_string())),
            ("scale", self.scale.map(|v| v.to_string())),
            ("replications", self.replications.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("days", self.days.map(|v| v.to_string())),
            ("train.episodes", self.episodes.map(|v| v.to_string())),
            ("out_dir", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got `{o}`")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn evaluate(cfg: &ExperimentConfig, train: bool) -> Result<()> {
    let art = run_experiment(cfg, train)?;
    print!("{}", summary_table(cfg, &art.metrics));
    println!("  artifacts in {}", art.dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.resolve()?;
            let (_, path) = train_policy(&cfg)?;
            println!("weights written to {}", path.display());
        }
        Command::Evaluate { common, train } => evaluate(&common.resolve()?, train)?,
        Command::Sweep { common, train } => {
            let base = common.resolve()?;
            for cfg in experiment_grid(base.scale, &base) {
                evaluate(&cfg, train)?;
            }
        }
        Command::SteadyState {
            total_resource,
            area,
            beta,
            m1,
            m2,
        } => {
            let inst = StylizedInstance::new(total_resource, area, beta, m1, m2)?;
            let report = analyze(&inst);
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Simulation(format!("serializing report: {e}")))?;
            println!("{json}");
            print!("{}", report.to_table());
        }
        Command::Compare {
            policy_dir,
            baseline_dir,
        } => print!("{}", compare(&policy_dir, &baseline_dir)?.to_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
