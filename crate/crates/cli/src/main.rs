use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedsa_core::config::{parse_config_unvalidated, ExperimentConfig};
use fedsa_core::experiment::{self, RunOutput, SweepParam};
use fedsa_core::metrics::MetricsRecord;
use fedsa_core::Error;

#[derive(Parser)]
#[command(name = "fedsa", version, about = "Federated learning as stochastic approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics CSV.
    Run(Common),
    /// Run one experiment per value of a parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// delta, snr_db, N, sigma_w or sigma_x-set
        #[arg(long)]
        param: String,
        /// Comma-separated values; sigma_x-set values are `/`-separated sets.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Proposed method and FedAvg/FedProx/FedNova under constant and tapering steps.
    CompareBaselines(Common),
    /// Rare-class classification under the three step-size regimes.
    Classify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Accept tapering exponents outside (0.75, 1]; outputs are marked unsupported.
    #[arg(long)]
    unsafe_delta: bool,
}

impl Common {
    fn load(&self, classification: bool) -> anyhow::Result<(ExperimentConfig, String)> {
        let (mut cfg, name) = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::validation("--config", format!("{}: {e}", path.display())))?;
                let name = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
                (parse_config_unvalidated(&text)?, name)
            }
            None if classification => (ExperimentConfig::classification(0), "classify".into()),
            None => (ExperimentConfig::regression(0), "run".into()),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(rounds) = self.rounds {
            cfg.rounds = rounds;
        }
        if self.unsafe_delta {
            cfg.unsafe_delta = true;
        }
        if let Some(out) = &self.out {
            cfg.output = out.to_string_lossy().into_owned();
        }
        Ok((cfg.validate()?, name))
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.6e}"))
}

fn summary(last: &MetricsRecord) -> String {
    match (last.param_error, last.test_acc) {
        (_, Some(acc)) => format!(
            "round {}: train_loss {} test_acc {acc:.4} rare_class_acc {} delta_wbar {}",
            last.round,
            fmt(last.train_loss),
            fmt(last.rare_class_acc),
            fmt(last.delta_wbar)
        ),
        _ => format!(
            "round {}: param_error {} agg_grad_norm {} delta_wbar {}",
            last.round,
            fmt(last.param_error),
            fmt(last.agg_grad_norm),
            fmt(last.delta_wbar)
        ),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let (cfg, name) = common.load(false)?;
            let (output, files) = experiment::run_to_dir(&cfg, Path::new(&cfg.output), &name)?;
            let last = match &output {
                RunOutput::Regression(r) => r.records.last(),
                RunOutput::Classification(c) => c.records.last(),
            };
            if let Some(last) = last {
                println!("{}", summary(last));
            }
            println!("wrote {}", files.metrics.display());
        }
        Command::Sweep { common, param, values } => {
            let (cfg, _) = common.load(false)?;
            let param = SweepParam::parse(&param)?;
            let (index, entries) = experiment::run_sweep(&cfg, param, &values, Path::new(&cfg.output))?;
            for e in &entries {
                if let Some(last) = e.output.records().last() {
                    println!("{} = {}: {}", param.name(), e.value, summary(last));
                }
            }
            println!("wrote {}", index.display());
        }
        Command::CompareBaselines(common) => {
            let (cfg, _) = common.load(false)?;
            let dir = PathBuf::from(&cfg.output);
            let rows = experiment::compare_baselines(&cfg, &dir)?;
            println!(
                "{:<9} {:<9} {:>16} {:>16} {:>16}",
                "group", "algorithm", "tail_delta_wbar", "param_error", "agg_grad_norm"
            );
            for r in &rows {
                match &r.outcome {
                    Ok(s) => println!(
                        "{:<9} {:<9} {:>16.6e} {:>16.6e} {:>16.6e}",
                        r.group,
                        r.algorithm.name(),
                        s.tail_median_delta,
                        s.final_param_error,
                        s.final_agg_grad_norm
                    ),
                    Err(msg) => println!("{:<9} {:<9} failed: {msg}", r.group, r.algorithm.name()),
                }
            }
            println!("wrote {}", dir.join("baselines_summary.csv").display());
        }
        Command::Classify(common) => {
            let (cfg, _) = common.load(true)?;
            let dir = PathBuf::from(&cfg.output);
            let rows = experiment::classify_regimes(&cfg, &dir)?;
            println!("{:<10} {:>14} {:>14} {:>14}", "regime", "tail_test_acc", "tail_rare_acc", "majority");
            for s in &rows {
                println!(
                    "{:<10} {:>14.4} {:>14.4} {:>14.4}",
                    s.regime.name(),
                    s.tail_test_acc,
                    s.tail_rare_acc,
                    s.majority_baseline
                );
            }
            println!("wrote {}", dir.join("classify_summary.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            match e.root_cause().downcast_ref::<Error>() {
                Some(
                    Error::Validation { .. }
                    | Error::InvalidSchedule(_)
                    | Error::DominanceViolation { .. }
                    | Error::NoDominantSchedule
                    | Error::ZeroSignal
                    | Error::SingularSystem,
                ) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
