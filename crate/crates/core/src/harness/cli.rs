use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

use super::config::TrainConfig;
use super::train::train;
use crate::base_algos::Algo;
use crate::envcore::{EnvId, RewardVariant};
use crate::error::Result;
use crate::see::AblationMode;

#[derive(Debug, Parser)]
#[command(
    name = "see",
    version,
    about = "Train SAC/TD3 agents with optional TD-error-seeking exploration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent and write metrics and a checkpoint.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file with keys named like the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// sac | td3
    #[arg(long)]
    pub algo: Option<Algo>,
    /// Enable the exploration policy and mixed behavior.
    #[arg(long, overrides_with = "no_see")]
    pub see: bool,
    #[arg(long = "no-see", overrides_with = "see")]
    pub no_see: bool,
    /// pendulum | local-optimum-car | two-goal-plane
    #[arg(long)]
    pub env: Option<EnvId>,
    /// dense | sparse | adverse
    #[arg(long)]
    pub reward: Option<RewardVariant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// no-conditioning | no-max-update | no-mixing (repeatable)
    #[arg(long = "ablation")]
    pub ablations: Vec<AblationMode>,
    /// Comma-separated hidden layer widths, e.g. 64,64
    #[arg(long, value_delimiter = ',')]
    pub hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.algo {
            cfg.algo = v;
        }
        if self.see {
            cfg.see_enabled = true;
        }
        if self.no_see {
            cfg.see_enabled = false;
        }
        if let Some(v) = self.env {
            cfg.env = v;
        }
        if let Some(v) = self.reward {
            cfg.reward = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.steps {
            cfg.total_steps = v;
        }
        if let Some(v) = self.warmup {
            cfg.warm_up_steps = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = self.eval_episodes {
            cfg.eval_episodes = v;
        }
        if !self.ablations.is_empty() {
            cfg.ablations = self.ablations.clone();
        }
        if let Some(v) = &self.hidden_dims {
            cfg.hidden_dims = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse `args` (including the program name) and execute. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                let mut cmd = Cli::command();
                cmd.build();
                let usage = match cmd.find_subcommand_mut("run") {
                    Some(run) => run.render_usage(),
                    None => cmd.render_usage(),
                };
                eprintln!("\n{usage}");
            }
            return e.exit_code();
        }
    };
    match cli.command {
        Command::Run(args) => {
            let cfg = match args.resolve() {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            };
            match cfg.to_toml_string() {
                Ok(text) => print!("{text}"),
                Err(e) => {
                    eprintln!("error: {e}");
                    return 1;
                }
            }
            if args.dry_run {
                return 0;
            }
            match train(&cfg) {
                Ok(outcome) => {
                    let row = outcome.final_row();
                    println!(
                        "step {} eval_return {:.3} +- {:.3} goal_fraction {:.2}",
                        row.step, row.eval_return_mean, row.eval_return_stderr, row.eval_goal_fraction
                    );
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
    }
}
