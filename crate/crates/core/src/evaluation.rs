//! Scoring frozen agents on held-out windows, repeated retraining runs, Student
//! confidence intervals, histograms and the results files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::env::{Action, PriceState, RewardConfig, WindowEnv};
use crate::error::{Error, Result};
use crate::market_data::{PriceSeries, TimeWindow};
use crate::stats::{mean, sample_stdev, student_t_quantile};

/// A frozen decision rule. Scoring only ever borrows the agent immutably.
pub trait Policy {
    fn act(&self, state: &PriceState) -> Action;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&self, state: &PriceState) -> Action {
        (**self).act(state)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, state: &PriceState) -> Action {
        (**self).act(state)
    }
}

/// Any closure over price states is a policy.
pub struct FnPolicy<F>(pub F);

impl<F: Fn(&PriceState) -> Action> Policy for FnPolicy<F> {
    fn act(&self, state: &PriceState) -> Action {
        (self.0)(state)
    }
}

/// Result of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScore {
    /// `anchor - p_buy`.
    pub profit: f64,
    /// `p_buy - min close in the window`.
    pub regret: f64,
    pub buy_day: usize,
    pub forced: bool,
}

/// Walks `window` greedily with `policy`, forcing a purchase on the last day.
pub fn score_window<P: Policy + ?Sized>(
    policy: &P,
    window: &TimeWindow,
    series: &PriceSeries,
    h: usize,
) -> Result<WindowScore> {
    let scoring = RewardConfig::window(0.0, 1.0);
    let (mut env, mut state) = WindowEnv::reset(window, series, h, scoring)?;
    loop {
        let day = env.day();
        let t = env.step(policy.act(&state))?;
        if t.done {
            let p_buy = window.bars()[day].close;
            return Ok(WindowScore {
                profit: window.anchor() - p_buy,
                regret: p_buy - window.min_close(),
                buy_day: day,
                forced: t.forced,
            });
        }
        state = t.next_state;
    }
}

/// Window averages for one scoring pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunResult {
    pub avg_profit: f64,
    pub avg_regret: f64,
    /// Fraction of windows with a voluntary (non-forced) purchase.
    pub buy_fraction: f64,
    pub n_windows: usize,
}

/// Scores every window that has `h` bars of history and averages.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    windows: &[TimeWindow],
    series: &PriceSeries,
    h: usize,
) -> Result<RunResult> {
    let scores = windows
        .iter()
        .filter(|w| w.start() >= h)
        .map(|w| score_window(policy, w, series, h))
        .collect::<Result<Vec<_>>>()?;
    if scores.is_empty() {
        return Err(Error::Setup(format!(
            "no window has {h} bars of history to score"
        )));
    }
    let n = scores.len() as f64;
    Ok(RunResult {
        avg_profit: scores.iter().map(|s| s.profit).sum::<f64>() / n,
        avg_regret: scores.iter().map(|s| s.regret).sum::<f64>() / n,
        buy_fraction: scores.iter().filter(|s| !s.forced).count() as f64 / n,
        n_windows: scores.len(),
    })
}

/// Aggregate of repeated runs, over each run's average profit.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub runs: Vec<RunResult>,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single run.
    pub stdev: Option<f64>,
    /// 95% Student interval; `None` for a single run.
    pub ci: Option<(f64, f64)>,
    pub histogram: Vec<(f64, usize)>,
}

impl EvalReport {
    pub fn from_runs(runs: Vec<RunResult>, bins: usize) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Usage("a report needs at least one run".into()));
        }
        let profits: Vec<f64> = runs.iter().map(|r| r.avg_profit).collect();
        let m = mean(&profits);
        let stdev = sample_stdev(&profits);
        let ci = match stdev {
            Some(s) => Some(student_ci(m, s, profits.len(), 0.95)?),
            None => None,
        };
        Ok(Self {
            histogram: histogram(&profits, bins)?,
            runs,
            mean: m,
            stdev,
            ci,
        })
    }

    pub fn mean_regret(&self) -> f64 {
        mean(&self.runs.iter().map(|r| r.avg_regret).collect::<Vec<_>>())
    }

    pub fn mean_buy_fraction(&self) -> f64 {
        mean(&self.runs.iter().map(|r| r.buy_fraction).collect::<Vec<_>>())
    }
}

/// Trains a fresh agent per run (seed `base_seed + i`) through `train`, scores
/// it on the test windows and aggregates. Runs execute on `jobs` worker
/// threads; results are reduced in run order so the report does not depend
/// on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn repeated_eval<F>(
    train: F,
    test_windows: &[TimeWindow],
    test_series: &PriceSeries,
    h: usize,
    n_runs: usize,
    base_seed: u64,
    jobs: usize,
    bins: usize,
) -> Result<EvalReport>
where
    F: Fn(u64) -> Result<Box<dyn Policy>> + Sync,
{
    if n_runs == 0 {
        return Err(Error::Config("number of runs must be at least 1".into()));
    }
    let one = |i: usize| -> Result<RunResult> {
        let policy = train(base_seed.wrapping_add(i as u64))?;
        evaluate(&policy, test_windows, test_series, h)
    };
    let runs: Vec<RunResult> = if jobs <= 1 {
        (0..n_runs).map(one).collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| (0..n_runs).into_par_iter().map(one).collect::<Result<_>>())?
    };
    EvalReport::from_runs(runs, bins)
}

/// Student confidence interval `mean ± t_{(1+level)/2, n-1} · stdev / sqrt(n)`.
pub fn student_ci(mean: f64, stdev: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Usage(format!("a confidence interval needs n >= 2, got {n}")));
    }
    if !(stdev >= 0.0) {
        return Err(Error::Usage(format!("stdev must be non-negative, got {stdev}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Usage(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if stdev == 0.0 {
        return Ok((mean, mean));
    }
    let t = student_t_quantile(0.5 * (1.0 + level), (n - 1) as f64)?;
    let half = t * stdev / (n as f64).sqrt();
    Ok((mean - half, mean + half))
}

/// Equal-width bins over `[min, max]`, returned as `(lower edge, count)`.
/// Bins are half-open except the last, which includes `max`. When all values
/// are equal every value lands in the first bin.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<Vec<(f64, usize)>> {
    if values.is_empty() {
        return Err(Error::Usage("histogram of an empty sample".into()));
    }
    if n_bins == 0 {
        return Err(Error::Usage("histogram needs at least one bin".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let idx = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, c))
        .collect())
}

/// The four agents in results-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Baseline,
    QLearning,
    ApproximateLinear,
    DeepQLearning,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Baseline,
        AgentKind::QLearning,
        AgentKind::ApproximateLinear,
        AgentKind::DeepQLearning,
    ];

    /// Row label in the results table.
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Baseline => "Baseline",
            AgentKind::QLearning => "Q-Learning",
            AgentKind::ApproximateLinear => "Approximate Linear",
            AgentKind::DeepQLearning => "Deep Q-Learning",
        }
    }

    /// Short command-line name.
    pub fn cli_name(self) -> &'static str {
        match self {
            AgentKind::Baseline => "baseline",
            AgentKind::QLearning => "q",
            AgentKind::ApproximateLinear => "linear",
            AgentKind::DeepQLearning => "deep",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.cli_name() == name)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

pub fn results_path(out_dir: &Path, company: &str) -> PathBuf {
    out_dir.join(format!("results_{company}.csv"))
}

pub fn histogram_path(out_dir: &Path, company: &str) -> PathBuf {
    out_dir.join(format!("histogram_{company}.csv"))
}

/// Writes `results_<company>.csv` (one row per agent, in [`AgentKind`] order)
/// and `histogram_<company>.csv`. Floats carry four decimals; interval and
/// stdev fields are left empty for single-run reports.
pub fn write_report(
    reports: &[(AgentKind, EvalReport)],
    company: &str,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::Usage("no reports to write".into()));
    }
    let mut sorted: Vec<&(AgentKind, EvalReport)> = reports.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    fs::create_dir_all(out_dir)?;

    let results = results_path(out_dir, company);
    let mut wtr = csv::Writer::from_path(&results)?;
    wtr.write_record(["agent", "average_profit", "ci_lower", "ci_upper", "profit_stdev"])?;
    for (kind, rep) in &sorted {
        let (lo, hi) = rep
            .ci
            .map(|(l, u)| (fmt4(l), fmt4(u)))
            .unwrap_or_default();
        wtr.write_record([
            kind.label().to_string(),
            fmt4(rep.mean),
            lo,
            hi,
            rep.stdev.map(fmt4).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;

    let hist = histogram_path(out_dir, company);
    let mut wtr = csv::Writer::from_path(&hist)?;
    wtr.write_record(["agent", "bin_lower", "count"])?;
    for (kind, rep) in &sorted {
        for (edge, count) in &rep.histogram {
            wtr.write_record([kind.label().to_string(), fmt4(*edge), count.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok((results, hist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tests::series_from_closes;
    use crate::market_data::make_windows;
    use crate::tabular::{BaselineAgent, BaselineConfig};

    fn buy_on(day: usize) -> FnPolicy<impl Fn(&PriceState) -> Action> {
        FnPolicy(move |s: &PriceState| if s.day() == day { Action::Buy } else { Action::Wait })
    }

    fn one_window(closes: &[f64]) -> (PriceSeries, TimeWindow) {
        let s = series_from_closes(closes);
        let w = make_windows(&s, closes.len()).unwrap().remove(0);
        (s, w)
    }

    #[test]
    fn bought_the_minimum() {
        let (s, w) = one_window(&[10.0, 9.0, 11.0, 12.0, 11.0]);
        let sc = score_window(&buy_on(1), &w, &s, 0).unwrap();
        assert_eq!((sc.profit, sc.regret, sc.buy_day, sc.forced), (1.0, 0.0, 1, false));
    }

    #[test]
    fn day_zero_purchase() {
        let (s, w) = one_window(&[10.0, 9.0, 11.0, 8.5, 11.0]);
        let sc = score_window(&buy_on(0), &w, &s, 0).unwrap();
        assert_eq!(sc.profit, 0.0);
        assert_eq!(sc.regret, 10.0 - 8.5);
    }

    #[test]
    fn never_buying_is_forced_on_last_day() {
        let (s, w) = one_window(&[10.0, 11.0, 12.0]);
        let sc = score_window(&FnPolicy(|_: &PriceState| Action::Wait), &w, &s, 0).unwrap();
        assert_eq!((sc.profit, sc.buy_day, sc.forced), (-2.0, 2, true));
    }

    #[test]
    fn evaluate_averages() {
        let (s, w) = one_window(&[10.0, 9.0, 11.0]);
        let r = evaluate(&buy_on(1), std::slice::from_ref(&w), &s, 0).unwrap();
        assert_eq!((r.avg_profit, r.avg_regret, r.buy_fraction, r.n_windows), (1.0, 0.0, 1.0, 1));

        let s = series_from_closes(&[10.0, 9.0, 10.0, 11.0]);
        let ws = make_windows(&s, 2).unwrap();
        let r = evaluate(&buy_on(1), &ws, &s, 0).unwrap();
        assert_eq!(r.avg_profit, 0.0);
        assert_eq!(r.buy_fraction, 1.0);

        assert!(matches!(evaluate(&buy_on(1), &ws, &s, 5), Err(Error::Setup(_))));
    }

    #[test]
    fn ci_examples() {
        let (lo, hi) = student_ci(-0.2482, 0.3819, 51, 0.95).unwrap();
        assert!((lo + 0.3556).abs() < 1e-3 && (hi + 0.1407).abs() < 1e-3, "{lo} {hi}");
        let (lo, hi) = student_ci(-0.1143, 0.2516, 51, 0.95).unwrap();
        assert!((lo + 0.1851).abs() < 1e-3 && (hi + 0.0435).abs() < 1e-3, "{lo} {hi}");
        assert_eq!(student_ci(1.5, 0.0, 51, 0.95).unwrap(), (1.5, 1.5));
        assert!(student_ci(0.0, 1.0, 1, 0.95).is_err());
    }

    #[test]
    fn ci_half_width_scales_with_root_n() {
        for &n in &[2usize, 5, 51, 400] {
            let (lo, hi) = student_ci(0.0, 2.0, n, 0.95).unwrap();
            let t = student_t_quantile(0.975, (n - 1) as f64).unwrap();
            assert!((0.5 * (hi - lo) - t * 2.0 / (n as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(histogram(&[0.0, 0.0, 0.0], 1).unwrap(), vec![(0.0, 3)]);
        let h = histogram(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(h, vec![(0.0, 2), (1.5, 2)]);
        let h = histogram(&[0.0, 1.5, 3.0], 2).unwrap();
        assert_eq!(h, vec![(0.0, 1), (1.5, 2)]);
        assert!(histogram(&[], 3).is_err());
        assert!(histogram(&[1.0], 0).is_err());
    }

    #[test]
    fn single_run_report_has_no_interval() {
        let r = RunResult {
            avg_profit: 0.25,
            avg_regret: 0.5,
            buy_fraction: 1.0,
            n_windows: 3,
        };
        let rep = EvalReport::from_runs(vec![r], 10).unwrap();
        assert_eq!(rep.stdev, None);
        assert_eq!(rep.ci, None);
        assert_eq!(rep.mean, 0.25);
    }

    #[test]
    fn baseline_repeated_eval_has_zero_spread() {
        let closes: Vec<f64> = (0..60).map(|i| 20.0 + ((i * 13) % 7) as f64 * 0.4).collect();
        let s = series_from_closes(&closes);
        let ws = make_windows(&s, 5).unwrap();
        let agent = BaselineAgent {
            config: BaselineConfig { d: 0.5 },
        };
        let rep = repeated_eval(|_| Ok(Box::new(agent)), &ws, &s, 2, 51, 0, 1, 10).unwrap();
        assert_eq!(rep.runs.len(), 51);
        assert_eq!(rep.stdev, Some(0.0));
        assert_eq!(rep.ci, Some((rep.mean, rep.mean)));
        let par = repeated_eval(|_| Ok(Box::new(agent)), &ws, &s, 2, 51, 0, 4, 10).unwrap();
        assert_eq!(par, rep);
    }

    #[test]
    fn agent_names() {
        for k in AgentKind::ALL {
            assert_eq!(AgentKind::from_cli_name(k.cli_name()), Some(k));
        }
        assert_eq!(AgentKind::from_cli_name("foo"), None);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let run = |p| RunResult {
            avg_profit: p,
            avg_regret: 0.0,
            buy_fraction: 0.0,
            n_windows: 1,
        };
        let base = EvalReport::from_runs(vec![run(-0.27), run(-0.27)], 2).unwrap();
        let deep = EvalReport::from_runs(vec![run(0.1), run(0.3)], 2).unwrap();
        let reports = vec![(AgentKind::DeepQLearning, deep), (AgentKind::Baseline, base)];
        let (res, hist) = write_report(&reports, "Apple", dir.path()).unwrap();
        let text = fs::read_to_string(res).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "agent,average_profit,ci_lower,ci_upper,profit_stdev");
        assert_eq!(lines[1], "Baseline,-0.2700,-0.2700,-0.2700,0.0000");
        assert!(lines[2].starts_with("Deep Q-Learning,0.2000,"));
        let h = fs::read_to_string(hist).unwrap();
        assert!(h.starts_with("agent,bin_lower,count\nBaseline,-0.2700,2\nBaseline,-0.2700,0\n"));
    }

    proptest::proptest! {
        #[test]
        fn conservation_and_brute_force_bound(
            closes in proptest::collection::vec(1.0f64..100.0, 2..12),
            choice in 0usize..12,
        ) {
            let (s, w) = one_window(&closes);
            let min = closes.iter().copied().fold(f64::INFINITY, f64::min);
            let best = closes.iter().map(|c| closes[0] - c).fold(f64::NEG_INFINITY, f64::max);
            let sc = score_window(&buy_on(choice), &w, &s, 0).unwrap();
            proptest::prop_assert!((sc.profit + sc.regret - (closes[0] - min)).abs() < 1e-9);
            proptest::prop_assert!(sc.profit <= best);
            proptest::prop_assert!(sc.regret >= 0.0);
            proptest::prop_assert!(sc.buy_day < closes.len());
            // buying at every candidate day: the optimum has zero regret
            let regrets: Vec<f64> = (0..closes.len())
                .map(|d| score_window(&buy_on(d), &w, &s, 0).unwrap().regret)
                .collect();
            proptest::prop_assert_eq!(regrets.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        }
    }

    #[test]
    fn histogram_matches_direct_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..10_000)
            .map(|_| {
                let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let bins = histogram(&values, 20).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / 20.0;
        for (i, (edge, count)) in bins.iter().enumerate() {
            let (a, b) = (lo + i as f64 * width, lo + (i + 1) as f64 * width);
            let scan = values
                .iter()
                .filter(|&&v| v >= a && (v < b || (i == 19 && v <= hi)))
                .count();
            assert_eq!(*edge, a);
            assert_eq!(*count, scan, "bin {i}");
        }
        assert_eq!(bins.iter().map(|b| b.1).sum::<usize>(), 10_000);
    }

    #[test]
    fn noise_agents_mean_within_three_sigma() {
        // each run buys on one day drawn from its seed, so a run's profit is
        // the average profit of that day across windows
        let closes: Vec<f64> = (0..100).map(|i| 30.0 + ((i * 37) % 11) as f64 - 0.3 * (i % 5) as f64).collect();
        let s = series_from_closes(&closes);
        let ws = make_windows(&s, 5).unwrap();
        let per_day: Vec<f64> = (0..5)
            .map(|d| evaluate(&buy_on(d), &ws, &s, 0).unwrap().avg_profit)
            .collect();
        let truth = mean(&per_day);
        let sigma = (per_day.iter().map(|p| (p - truth).powi(2)).sum::<f64>() / 5.0).sqrt();
        let rep = repeated_eval(
            |seed| {
                use rand::{Rng, SeedableRng};
                let day = rand_chacha::ChaCha8Rng::seed_from_u64(seed).gen_range(0..5);
                Ok(Box::new(buy_on(day)) as Box<dyn Policy>)
            },
            &ws,
            &s,
            0,
            51,
            100,
            1,
            10,
        )
        .unwrap();
        assert!((rep.mean - truth).abs() <= 3.0 * sigma / 51f64.sqrt(), "{} vs {truth}", rep.mean);
    }

    #[test]
    fn scoring_leaves_parameters_untouched() {
        use crate::approx::{train_linear, UpdateRule};
        use crate::tabular::TrainConfig;
        let closes: Vec<f64> = (0..60).map(|i| 20.0 + ((i * 7) % 5) as f64).collect();
        let s = series_from_closes(&closes);
        let ws = make_windows(&s, 5).unwrap();
        let (weights, _) = train_linear(
            &ws,
            &s,
            1,
            &RewardConfig::window(1.0, 0.9),
            &TrainConfig::default(),
            UpdateRule::TdError,
        )
        .unwrap();
        let before = weights.clone();
        evaluate(&weights, &ws, &s, 1).unwrap();
        assert_eq!(weights, before);
    }
}
