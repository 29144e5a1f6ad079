//! Supervised baselines: next-close regression, persistence, and logistic
//! movement classification.

use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::market_data::{Movement, PriceSeries};
use crate::tabular::agent_rng;

/// Default relative tolerance for a regression prediction to count as correct.
pub const DEFAULT_TOL: f64 = 0.02;
/// Days of history in one classification sample.
pub const CLASSIFIER_DAYS: usize = 3;
const OLS_JITTER: f64 = 1e-8;

/// Linear model `y = intercept + coefficients · x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl RegressionModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::Usage(format!(
                "regression expects {} features, got {}",
                self.coefficients.len(),
                x.len()
            )));
        }
        Ok(self.intercept + dot(&self.coefficients, x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_rows(features: &[Vec<f64>], targets_len: usize) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::Usage("no training rows".into()));
    }
    if features.len() != targets_len {
        return Err(Error::Usage(format!(
            "{} feature rows but {} targets",
            features.len(),
            targets_len
        )));
    }
    let k = features[0].len();
    if let Some(i) = features.iter().position(|r| r.len() != k) {
        return Err(Error::Usage(format!(
            "row {i} has {} features, expected {k}",
            features[i].len()
        )));
    }
    Ok(k)
}

/// Least squares with an intercept column, via the normal equations with
/// `1e-8` added to the diagonal.
pub fn fit_ols(features: &[Vec<f64>], targets: &[f64]) -> Result<RegressionModel> {
    let k = check_rows(features, targets.len())?;
    let n = features.len();
    if n < k + 1 {
        return Err(Error::Usage(format!(
            "{n} rows cannot determine {} coefficients",
            k + 1
        )));
    }
    let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { features[i][j - 1] });
    let y = DVector::from_column_slice(targets);
    let mut xtx = x.transpose() * &x;
    for i in 0..=k {
        xtx[(i, i)] += OLS_JITTER;
    }
    let xty = x.transpose() * y;
    let beta = xtx
        .clone()
        .cholesky()
        .map(|c| c.solve(&xty))
        .or_else(|| xtx.lu().solve(&xty))
        .ok_or_else(|| Error::Numerical("normal equations are singular".into()))?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("regression produced non-finite coefficients".into()));
    }
    Ok(RegressionModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

/// Tomorrow's close predicted as today's.
pub fn persistence_predict(today_close: f64) -> f64 {
    today_close
}

/// Fraction of predictions with `|pred - actual| / actual <= tol`.
pub fn accuracy_within(preds: &[f64], actuals: &[f64], tol: f64) -> Result<f64> {
    if preds.len() != actuals.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} actual values",
            preds.len(),
            actuals.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Usage("accuracy of an empty sample".into()));
    }
    if let Some(a) = actuals.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Usage(format!("actual values must be positive, got {a}")));
    }
    let hits = preds
        .iter()
        .zip(actuals)
        .filter(|(p, a)| within(**p, **a, tol))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

fn within(pred: f64, actual: f64, tol: f64) -> bool {
    (pred - actual).abs() / actual <= tol
}

/// Logistic weights; `weights[0]` is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub weights: Vec<f64>,
}

impl ClassifierModel {
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.weights[0] + dot(&self.weights[1..], x))
    }

    /// Up when the probability reaches 0.5.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.probability(x) >= 0.5
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[bool]) -> Result<f64> {
        let preds: Vec<bool> = features.iter().map(|x| self.predict(x)).collect();
        label_accuracy(&preds, labels)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean cross-entropy of `weights` (bias first) and its gradient.
pub fn logistic_loss_grad(weights: &[f64], features: &[Vec<f64>], labels: &[bool]) -> (f64, Vec<f64>) {
    let n = features.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for (x, &y) in features.iter().zip(labels) {
        let z = weights[0] + dot(&weights[1..], x);
        // -[y ln σ(z) + (1-y) ln(1-σ(z))] = softplus(z) - y z
        loss += softplus(z) - if y { z } else { 0.0 };
        let err = sigmoid(z) - if y { 1.0 } else { 0.0 };
        grad[0] += err;
        for (g, xi) in grad[1..].iter_mut().zip(x) {
            *g += err * xi;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

/// Logistic fit settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 500,
            seed: 0,
        }
    }
}

/// Full-batch gradient descent on mean cross-entropy from small seeded
/// weights. Returns the model and the loss before each epoch plus the final one.
pub fn fit_logistic(
    features: &[Vec<f64>],
    labels: &[bool],
    config: &LogisticConfig,
) -> Result<(ClassifierModel, Vec<f64>)> {
    let k = check_rows(features, labels.len())?;
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be positive, got {}",
            config.learning_rate
        )));
    }
    let mut rng = agent_rng(config.seed);
    let mut w: Vec<f64> = (0..=k).map(|_| rng.gen_range(-0.01..=0.01)).collect();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, grad) = logistic_loss_grad(&w, features, labels);
        if !loss.is_finite() {
            return Err(Error::Numerical("logistic loss became non-finite".into()));
        }
        losses.push(loss);
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= config.learning_rate * g;
        }
    }
    let (loss, _) = logistic_loss_grad(&w, features, labels);
    if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("logistic fit diverged".into()));
    }
    losses.push(loss);
    Ok((ClassifierModel { weights: w }, losses))
}

pub fn label_accuracy(preds: &[bool], labels: &[bool]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Usage("accuracy of an empty sample".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Train and test accuracy of a fitted classifier.
pub fn classification_report(
    model: &ClassifierModel,
    train: (&[Vec<f64>], &[bool]),
    test: (&[Vec<f64>], &[bool]),
) -> Result<(f64, f64)> {
    Ok((model.accuracy(train.0, train.1)?, model.accuracy(test.0, test.1)?))
}

/// Chronological cut: the first 80% (rounded down) trains.
pub fn split_80_20<T>(rows: &[T]) -> Result<(&[T], &[T])> {
    let cut = rows.len() * 8 / 10;
    if cut == 0 || cut == rows.len() {
        return Err(Error::Sizing {
            needed: 5,
            got: rows.len(),
        });
    }
    Ok(rows.split_at(cut))
}

/// One regression sample: today's prices against tomorrow's close.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    /// Date of the predicted close.
    pub date: NaiveDate,
    pub today: [f64; 4],
    pub target: f64,
}

pub fn regression_rows(series: &PriceSeries) -> Vec<RegressionRow> {
    series
        .bars()
        .windows(2)
        .map(|p| RegressionRow {
            date: p[1].date,
            today: p[0].prices(),
            target: p[1].close,
        })
        .collect()
}

/// One classification sample: three days of prices relative to the last
/// day's close, labelled with the next day's movement.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRow {
    pub date: NaiveDate,
    pub features: Vec<f64>,
    pub up: bool,
    /// The last feature day's own movement, used by the persistence classifier.
    pub today_up: bool,
}

pub fn classification_rows(series: &PriceSeries) -> Vec<ClassificationRow> {
    let bars = series.bars();
    if bars.len() < CLASSIFIER_DAYS + 1 {
        return Vec::new();
    }
    (CLASSIFIER_DAYS - 1..bars.len() - 1)
        .map(|t| {
            let base = bars[t].close;
            let features = bars[t + 1 - CLASSIFIER_DAYS..=t]
                .iter()
                .flat_map(|b| b.prices())
                .map(|p| p / base - 1.0)
                .collect();
            ClassificationRow {
                date: bars[t + 1].date,
                features,
                up: bars[t + 1].movement() == Movement::Up,
                today_up: bars[t].movement() == Movement::Up,
            }
        })
        .collect()
}

/// Accuracy of predicting each day's movement as the previous day's.
pub fn persistence_movement_accuracy(rows: &[ClassificationRow]) -> Result<f64> {
    let preds: Vec<bool> = rows.iter().map(|r| r.today_up).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.up).collect();
    label_accuracy(&preds, &labels)
}

/// One row of the prediction report.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub algorithm: &'static str,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// A test-period regression prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyPrediction {
    pub date: NaiveDate,
    pub actual: f64,
    pub predicted: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub rows: Vec<AccuracyRow>,
    pub predictions: Vec<DailyPrediction>,
}

/// Fits every baseline on the first 80% of `series` and scores both parts.
/// `tol` applies to the regression-style rows; the classifier is scored on
/// movement labels.
pub fn run_prediction(series: &PriceSeries, tol: f64, logistic: &LogisticConfig) -> Result<PredictionReport> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::Config(format!("tolerance must be non-negative, got {tol}")));
    }
    let reg = regression_rows(series);
    let (train, test) = split_80_20(&reg)?;
    let xs = |rows: &[RegressionRow]| rows.iter().map(|r| r.today.to_vec()).collect::<Vec<_>>();
    let ys = |rows: &[RegressionRow]| rows.iter().map(|r| r.target).collect::<Vec<_>>();
    let model = fit_ols(&xs(train), &ys(train))?;
    let ols_preds = |rows: &[RegressionRow]| {
        rows.iter()
            .map(|r| model.predict(&r.today))
            .collect::<Result<Vec<_>>>()
    };
    let persist = |rows: &[RegressionRow]| {
        rows.iter()
            .map(|r| persistence_predict(r.today[3]))
            .collect::<Vec<_>>()
    };
    let test_ols = ols_preds(test)?;
    let ols_row = AccuracyRow {
        algorithm: "ols",
        train_accuracy: accuracy_within(&ols_preds(train)?, &ys(train), tol)?,
        test_accuracy: accuracy_within(&test_ols, &ys(test), tol)?,
    };
    let persistence_row = AccuracyRow {
        algorithm: "persistence",
        train_accuracy: accuracy_within(&persist(train), &ys(train), tol)?,
        test_accuracy: accuracy_within(&persist(test), &ys(test), tol)?,
    };

    let cls = classification_rows(series);
    let (ctrain, ctest) = split_80_20(&cls)?;
    let feats = |rows: &[ClassificationRow]| rows.iter().map(|r| r.features.clone()).collect::<Vec<_>>();
    let labels = |rows: &[ClassificationRow]| rows.iter().map(|r| r.up).collect::<Vec<_>>();
    let (clf, _) = fit_logistic(&feats(ctrain), &labels(ctrain), logistic)?;
    let (train_acc, test_acc) = classification_report(
        &clf,
        (&feats(ctrain), &labels(ctrain)),
        (&feats(ctest), &labels(ctest)),
    )?;
    let logistic_row = AccuracyRow {
        algorithm: "logistic",
        train_accuracy: train_acc,
        test_accuracy: test_acc,
    };

    let predictions = test
        .iter()
        .zip(&test_ols)
        .map(|(r, &p)| DailyPrediction {
            date: r.date,
            actual: r.target,
            predicted: p,
            correct: within(p, r.target, tol),
        })
        .collect();
    Ok(PredictionReport {
        rows: vec![ols_row, persistence_row, logistic_row],
        predictions,
    })
}

/// Writes the accuracy table (`algorithm,train_accuracy,test_accuracy`).
pub fn write_accuracy_csv<W: Write>(rows: &[AccuracyRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["algorithm", "train_accuracy", "test_accuracy"])?;
    for r in rows {
        wtr.write_record([
            r.algorithm.to_string(),
            format!("{:.4}", r.train_accuracy),
            format!("{:.4}", r.test_accuracy),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes per-day predictions (`date,actual,predicted,correct`).
pub fn write_predictions_csv<W: Write>(preds: &[DailyPrediction], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["date", "actual", "predicted", "correct"])?;
    for p in preds {
        wtr.write_record([
            p.date.format("%Y-%m-%d").to_string(),
            format!("{:.4}", p.actual),
            format!("{:.4}", p.predicted),
            p.correct.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
