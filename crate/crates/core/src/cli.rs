//! Command-line parsing and dispatch for the `qtrade` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::config::{read_config_file, RunConfig};
use crate::error::Result;
use crate::evaluation::{AgentKind, RunResult};
use crate::pipeline::{cmd_evaluate, cmd_predict, cmd_train, unknown_agent};

#[derive(Debug, Parser)]
#[command(name = "qtrade", version, about = "Learn when to buy a stock within a fixed window of trading days")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent on the training split and write its parameters and log.
    Train {
        /// Agent to train: baseline, q, linear or deep.
        agent: String,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Retrain and score all four agents repeatedly; write results and histogram CSVs.
    Evaluate {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Run the regression, persistence and logistic price-prediction baselines.
    Predict {
        #[command(flatten)]
        opts: Overrides,
    },
}

/// Settings shared by every command. Flags override the config file, which
/// overrides the built-in defaults.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Flat key=value file using the long flag names as keys
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Company label, used for file names [default: Microsoft]
    #[arg(long)]
    pub company: Option<String>,
    /// Price CSV to read [default: <data-dir>/<company>.csv]
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Directory holding <company>.csv files [default: data]
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Output directory [default: results]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Drop bars dated before this day [default: 2005-01-01]
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub cutoff: Option<NaiveDate>,
    /// Window length in trading days [default: 5; >= 2]
    #[arg(long)]
    pub w: Option<usize>,
    /// Days of history before the current day [default: 2; >= 0]
    #[arg(long)]
    pub h: Option<usize>,
    /// Learning rate of the tabular and linear agents [default: 0.1; in [0, 1]]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Discount factor [default: 0.95; in [0, 1]]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Exploration rate [default: 0.1; in [0, 1]]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Decay ε linearly to this floor over training [default: no decay; in [0, epsilon]]
    #[arg(long)]
    pub epsilon_floor: Option<f64>,
    /// Movement reward for a buy before a rise [default: 1; > 0]
    #[arg(long)]
    pub r: Option<f64>,
    /// Movement cost of waiting a day [default: 0.1; >= 0]
    #[arg(long)]
    pub c: Option<f64>,
    /// Penalty added to a forced last-day purchase during training [default: 1; >= 0]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Baseline buys once the close is this far below the first close [default: 0.5; >= 0]
    #[arg(long)]
    pub d: Option<f64>,
    /// Training passes [default: q 50, linear 50, deep 30; >= 0]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden layers of the deep agent [default: 2; >= 1]
    #[arg(long)]
    pub n_hidden_layers: Option<usize>,
    /// Units per hidden layer [default: 16; >= 1]
    #[arg(long)]
    pub n_units: Option<usize>,
    /// Deep agent learning rate [default: 0.001; > 0]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Repeated runs per agent [default: 51; >= 1]
    #[arg(long)]
    pub n_runs: Option<usize>,
    /// Base seed; run i uses seed + i [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for repeated runs [default: 1; >= 1]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Histogram bins [default: 10; >= 1]
    #[arg(long)]
    pub bins: Option<usize>,
    /// Relative error counted as a correct price prediction [default: 0.02; >= 0]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Linear agent: use the weight update without the -Q(s,a) term [default: off]
    #[arg(long)]
    pub paper_literal_update: bool,
}

impl Overrides {
    /// Resolves defaults, then the config file, then these flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_map(&read_config_file(path)?)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                })*
            };
        }
        set!(company, data_dir, out_dir, cutoff, w, h, alpha, gamma, epsilon, r, c, lambda, d);
        set!(n_hidden_layers, n_units, learning_rate, n_runs, seed, jobs, bins, tol);
        if self.data.is_some() {
            cfg.data = self.data.clone();
        }
        if self.epsilon_floor.is_some() {
            cfg.epsilon_floor = self.epsilon_floor;
        }
        if self.epochs.is_some() {
            cfg.epochs = self.epochs;
        }
        if self.paper_literal_update {
            cfg.paper_literal_update = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt_result(r: &RunResult) -> String {
    format!(
        "average profit {:.4}, average regret {:.4}, buy fraction {:.4} over {} windows",
        r.avg_profit, r.avg_regret, r.buy_fraction, r.n_windows
    )
}

/// Executes a parsed command, writing a human-readable summary to `out`.
pub fn execute<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    match cli.command {
        Command::Train { agent, opts } => {
            let kind = AgentKind::from_cli_name(&agent).ok_or_else(|| unknown_agent(&agent))?;
            let cfg = opts.resolve()?;
            let o = cmd_train(kind, &cfg)?;
            writeln!(out, "{} trained on {}", kind.label(), cfg.company)?;
            writeln!(out, "train:      {}", fmt_result(&o.train))?;
            writeln!(out, "validation: {}", fmt_result(&o.validation))?;
            writeln!(out, "model: {}", o.model_path.display())?;
            writeln!(out, "log:   {}", o.log_path.display())?;
        }
        Command::Evaluate { opts } => {
            let cfg = opts.resolve()?;
            let o = cmd_evaluate(&cfg)?;
            writeln!(out, "{} ({} runs)", cfg.company, cfg.n_runs)?;
            for (kind, rep) in &o.reports {
                let ci = rep
                    .ci
                    .map(|(l, u)| format!("[{l:.4}; {u:.4}]"))
                    .unwrap_or_else(|| "-".into());
                let sd = rep.stdev.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
                writeln!(
                    out,
                    "{:<20} {:>9.4} {:>22} {:>8}",
                    kind.label(),
                    rep.mean,
                    ci,
                    sd
                )?;
            }
            writeln!(out, "results:   {}", o.results_path.display())?;
            writeln!(out, "histogram: {}", o.histogram_path.display())?;
        }
        Command::Predict { opts } => {
            let cfg = opts.resolve()?;
            let o = cmd_predict(&cfg)?;
            writeln!(out, "{:<12} {:>14} {:>14}", "algorithm", "train accuracy", "test accuracy")?;
            for r in &o.report.rows {
                writeln!(out, "{:<12} {:>14.4} {:>14.4}", r.algorithm, r.train_accuracy, r.test_accuracy)?;
            }
            writeln!(out, "report:      {}", o.report_path.display())?;
            writeln!(out, "predictions: {}", o.predictions_path.display())?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command. Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
