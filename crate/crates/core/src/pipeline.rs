//! The train, evaluate and predict workflows on a resolved [`RunConfig`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::approx::{train_deep, train_linear, DeepQ, LinearWeights};
use crate::config::RunConfig;
use crate::env::PriceState;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, repeated_eval, write_report, AgentKind, EvalReport, Policy, RunResult};
use crate::market_data::{filter_from, make_windows, parse_csv, split_80_10_10, PriceSeries, SplitSeries, TimeWindow};
use crate::prediction::{run_prediction, write_accuracy_csv, write_predictions_csv, PredictionReport};
use crate::tabular::{train_tabular, BaselineAgent, QTable, TrainingLog};

/// Reads the configured data file and keeps bars from the cutoff onwards.
pub fn load_series(cfg: &RunConfig) -> Result<PriceSeries> {
    let path = cfg.data_path();
    let file = File::open(&path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot open {}: {e}", path.display()))
    })?;
    let series = parse_csv(cfg.company.clone(), file)?;
    Ok(filter_from(&series, cfg.cutoff))
}

/// A split together with its windows, each window tied to its own part.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub split: SplitSeries,
    pub train_windows: Vec<TimeWindow>,
    pub validation_windows: Vec<TimeWindow>,
    pub test_windows: Vec<TimeWindow>,
}

impl Dataset {
    pub fn new(series: &PriceSeries, w: usize) -> Result<Self> {
        let split = split_80_10_10(series)?;
        Ok(Self {
            train_windows: make_windows(&split.train, w)?,
            validation_windows: make_windows(&split.validation, w)?,
            test_windows: make_windows(&split.test, w)?,
            split,
        })
    }
}

/// A trained agent of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedAgent {
    Baseline(BaselineAgent),
    QLearning(QTable),
    Linear(LinearWeights),
    Deep(DeepQ),
}

impl Policy for TrainedAgent {
    fn act(&self, state: &PriceState) -> crate::env::Action {
        match self {
            TrainedAgent::Baseline(a) => a.act(state),
            TrainedAgent::QLearning(a) => a.act(state),
            TrainedAgent::Linear(a) => a.act(state),
            TrainedAgent::Deep(a) => a.act(state),
        }
    }
}

impl TrainedAgent {
    /// Writes the parameters in the agent's native format.
    pub fn write_model<W: Write>(&self, writer: W) -> Result<()> {
        match self {
            TrainedAgent::Baseline(a) => {
                let mut writer = writer;
                writeln!(writer, "d={}", a.config.d)?;
                Ok(())
            }
            TrainedAgent::QLearning(q) => q.write_csv(writer),
            TrainedAgent::Linear(l) => l.write_csv(writer),
            TrainedAgent::Deep(d) => d.write_text(writer),
        }
    }

    fn model_extension(&self) -> &'static str {
        match self {
            TrainedAgent::Baseline(_) | TrainedAgent::Deep(_) => "txt",
            TrainedAgent::QLearning(_) | TrainedAgent::Linear(_) => "csv",
        }
    }
}

/// Trains `agent` on the training part with the run seed set to `seed`.
pub fn train_agent(
    agent: AgentKind,
    cfg: &RunConfig,
    data: &Dataset,
    seed: u64,
) -> Result<(TrainedAgent, TrainingLog)> {
    let cfg = RunConfig {
        seed,
        ..cfg.clone()
    };
    let train = &data.split.train;
    Ok(match agent {
        AgentKind::Baseline => (
            TrainedAgent::Baseline(BaselineAgent {
                config: cfg.baseline(),
            }),
            Vec::new(),
        ),
        AgentKind::QLearning => {
            let (q, log) = train_tabular(train, cfg.h, &cfg.movement_reward(), &cfg.train_config(agent))?;
            (TrainedAgent::QLearning(q), log)
        }
        AgentKind::ApproximateLinear => {
            let (w, log) = train_linear(
                &data.train_windows,
                train,
                cfg.h,
                &cfg.window_reward(),
                &cfg.train_config(agent),
                cfg.update_rule(),
            )?;
            (TrainedAgent::Linear(w), log)
        }
        AgentKind::DeepQLearning => {
            let (d, log) = train_deep(
                &data.train_windows,
                train,
                cfg.h,
                &cfg.window_reward(),
                &cfg.deep_hyperparams(),
            )?;
            (TrainedAgent::Deep(d), log)
        }
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display()))
    })?;
    Ok(BufWriter::new(file))
}

pub fn write_training_log<W: Write>(log: &TrainingLog, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["epoch", "epsilon", "steps", "avg_reward", "loss"])?;
    for e in log {
        wtr.write_record([
            e.epoch.to_string(),
            e.epsilon.to_string(),
            e.steps.to_string(),
            e.avg_reward.to_string(),
            e.loss.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// What `train` produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: TrainedAgent,
    pub model_path: PathBuf,
    pub log_path: PathBuf,
    pub train: RunResult,
    pub validation: RunResult,
}

/// Trains one agent, writes `<agent>_<company>.{csv,txt}` and
/// `<agent>_<company>_log.csv`, and scores the training and validation parts.
pub fn cmd_train(agent: AgentKind, cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = Dataset::new(&load_series(cfg)?, cfg.w)?;
    let (trained, log) = train_agent(agent, cfg, &data, cfg.seed)?;
    let train = evaluate(&trained, &data.train_windows, &data.split.train, cfg.h)?;
    let validation = evaluate(&trained, &data.validation_windows, &data.split.validation, cfg.h)?;

    fs::create_dir_all(&cfg.out_dir)?;
    let stem = format!("{}_{}", agent.cli_name(), cfg.company);
    let model_path = cfg.out_dir.join(format!("{stem}.{}", trained.model_extension()));
    let mut out = create(&model_path)?;
    trained.write_model(&mut out)?;
    out.flush()?;
    let log_path = cfg.out_dir.join(format!("{stem}_log.csv"));
    write_training_log(&log, create(&log_path)?)?;
    Ok(TrainOutcome {
        agent: trained,
        model_path,
        log_path,
        train,
        validation,
    })
}

/// What `evaluate` produced.
#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub reports: Vec<(AgentKind, EvalReport)>,
    pub results_path: PathBuf,
    pub histogram_path: PathBuf,
}

/// Repeated retrain-and-score of every agent on an already loaded series.
pub fn evaluate_all(cfg: &RunConfig, series: &PriceSeries) -> Result<Vec<(AgentKind, EvalReport)>> {
    cfg.validate()?;
    let data = Dataset::new(series, cfg.w)?;
    AgentKind::ALL
        .into_iter()
        .map(|agent| {
            let report = repeated_eval(
                |seed| {
                    let (trained, _) = train_agent(agent, cfg, &data, seed)?;
                    Ok(Box::new(trained) as Box<dyn Policy>)
                },
                &data.test_windows,
                &data.split.test,
                cfg.h,
                cfg.n_runs,
                cfg.seed,
                cfg.jobs,
                cfg.bins,
            )?;
            Ok((agent, report))
        })
        .collect()
}

/// Evaluates all four agents and writes the results and histogram files.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluateOutcome> {
    cfg.validate()?;
    let reports = evaluate_all(cfg, &load_series(cfg)?)?;
    let (results_path, histogram_path) = write_report(&reports, &cfg.company, &cfg.out_dir)?;
    Ok(EvaluateOutcome {
        reports,
        results_path,
        histogram_path,
    })
}

/// What `predict` produced.
#[derive(Debug, Clone)]
pub struct PredictOutcome {
    pub report: PredictionReport,
    pub report_path: PathBuf,
    pub predictions_path: PathBuf,
}

/// Runs the supervised baselines and writes `prediction_<company>.csv` and
/// `predictions_<company>.csv`.
pub fn cmd_predict(cfg: &RunConfig) -> Result<PredictOutcome> {
    cfg.validate()?;
    let series = load_series(cfg)?;
    let report = run_prediction(&series, cfg.tol, &cfg.logistic())?;
    fs::create_dir_all(&cfg.out_dir)?;
    let report_path = cfg.out_dir.join(format!("prediction_{}.csv", cfg.company));
    write_accuracy_csv(&report.rows, create(&report_path)?)?;
    let predictions_path = cfg.out_dir.join(format!("predictions_{}.csv", cfg.company));
    write_predictions_csv(&report.predictions, create(&predictions_path)?)?;
    Ok(PredictOutcome {
        report,
        report_path,
        predictions_path,
    })
}

/// Error for an agent name that is not one of the four.
pub fn unknown_agent(name: &str) -> Error {
    let known: Vec<&str> = AgentKind::ALL.iter().map(|k| k.cli_name()).collect();
    Error::Usage(format!("unknown agent '{name}'; expected one of {}", known.join(", ")))
}
