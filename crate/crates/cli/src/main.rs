use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use v2v_aoi::error::{Error, Result};
use v2v_aoi::harness::{self, ExperimentConfig, PolicyName, RunOptions};

#[derive(Parser)]
#[command(name = "aoi-lab", version, about = "Age-of-information-aware V2V status-update experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy per seed
    Train(Common),
    /// Evaluate a trained checkpoint
    Eval(Common),
    /// Evaluate a policy across one scenario axis
    Sweep(Common),
    /// Evaluate a non-learning policy
    Baseline(Common),
    /// Run the built-in oracle checks
    Selftest,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyName>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite a non-empty output directory
    #[arg(long)]
    force: bool,
}

fn parse_policy(s: &str) -> std::result::Result<PolicyName, String> {
    PolicyName::parse(s).ok_or_else(|| {
        let names: Vec<&str> = PolicyName::ALL.iter().map(|p| p.as_str()).collect();
        format!("unknown policy `{s}` (expected one of {})", names.join(", "))
    })
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, RunOptions)> {
        let mut cfg = match &self.config {
            Some(p) => harness::load_config(p)?,
            None => ExperimentConfig::default(),
        };
        if !self.seed.is_empty() {
            cfg.experiment.seeds = self.seed.clone();
        }
        if let Some(p) = self.policy {
            cfg.experiment.policy = p;
        }
        if let Some(o) = &self.out {
            cfg.experiment.out_dir = o.clone();
        }
        cfg.validate()?;
        let opts = RunOptions { out_dir: cfg.experiment.out_dir.clone(), force: self.force, checkpoint: self.checkpoint.clone() };
        Ok((cfg, opts))
    }
}

fn mean_aoi(rows: &[harness::MetricsRow]) -> f64 {
    rows.iter().map(|r| r.mean_aoi_ms).sum::<f64>() / rows.len().max(1) as f64
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let (cfg, opts) = c.resolve()?;
            let s = harness::cmd_train(&cfg, &opts)?;
            for (seed, curve) in &s.curves {
                let tail = &curve[curve.len().saturating_sub(50)..];
                let aoi = tail.iter().map(|r| r.mean_aoi).sum::<f64>() / tail.len().max(1) as f64;
                println!("seed {seed}: {} episodes, mean AoI over last {} = {aoi:.3} slots", curve.len(), tail.len());
            }
            println!("wrote {}", opts.out_dir.display());
        }
        Command::Eval(c) => {
            let (cfg, opts) = c.resolve()?;
            let rows = harness::cmd_eval(&cfg, &opts)?;
            println!("mappo: {} episodes, mean AoI {:.3} ms", rows.len(), mean_aoi(&rows));
            println!("wrote {}", opts.out_dir.display());
        }
        Command::Baseline(c) => {
            let (cfg, opts) = c.resolve()?;
            let rows = harness::cmd_baseline(&cfg, &opts)?;
            println!("{}: {} episodes, mean AoI {:.3} ms", cfg.experiment.policy.as_str(), rows.len(), mean_aoi(&rows));
            println!("wrote {}", opts.out_dir.display());
        }
        Command::Sweep(c) => {
            let (cfg, opts) = c.resolve()?;
            for r in harness::cmd_sweep(&cfg, &opts)? {
                println!("{} {}={}: mean AoI {:.3} ± {:.3} ms", r.policy, r.axis, r.sweep_value, r.mean_aoi_ms, r.std_err_ms);
            }
            println!("wrote {}", opts.out_dir.display());
        }
        Command::Selftest => {
            let results = v2v_aoi::check::suites::run_all();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
            if !failed.is_empty() {
                return Err(Error::SelfTest(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
