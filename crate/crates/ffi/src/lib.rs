//! C ABI for qtrade.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns a
//! [`QtStatus`]; on failure [`qt_last_error`] describes the most recent error
//! on the calling thread.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use chrono::NaiveDate;
use qtrade::config::{RunConfig, CONFIG_KEYS};
use qtrade::evaluation::{student_ci, write_report, AgentKind, EvalReport};
use qtrade::market_data::{filter_from, parse_csv, PriceSeries};
use qtrade::pipeline::evaluate_all;
use qtrade::prediction::run_prediction;
use qtrade::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QtStatus {
    Ok = 0,
    /// Bad argument or call sequence.
    Usage = 1,
    /// A configuration value is out of bounds or unparsable.
    Config = 2,
    /// Input data failed to parse or validate, or is too short.
    Data = 3,
    /// The data cannot support the requested run.
    Setup = 4,
    Io = 5,
    Numerical = 6,
    /// A required pointer argument was null.
    NullPointer = 7,
    /// The library panicked; the handle involved should be discarded.
    Panic = 8,
}

impl From<&Error> for QtStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Usage(_) => QtStatus::Usage,
            Error::Config(_) => QtStatus::Config,
            Error::Parse { .. } | Error::Validation { .. } | Error::Ordering { .. } | Error::Sizing { .. } => {
                QtStatus::Data
            }
            Error::Setup(_) => QtStatus::Setup,
            Error::Io(_) => QtStatus::Io,
            Error::Numerical(_) => QtStatus::Numerical,
        }
    }
}

/// Agents in results-table order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QtAgent {
    Baseline = 0,
    QLearning = 1,
    ApproximateLinear = 2,
    DeepQLearning = 3,
}

impl From<AgentKind> for QtAgent {
    fn from(k: AgentKind) -> Self {
        match k {
            AgentKind::Baseline => QtAgent::Baseline,
            AgentKind::QLearning => QtAgent::QLearning,
            AgentKind::ApproximateLinear => QtAgent::ApproximateLinear,
            AgentKind::DeepQLearning => QtAgent::DeepQLearning,
        }
    }
}

/// One row of an evaluation report. Without a confidence interval (a
/// single run) `has_interval` is false and the stdev and bounds are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QtReportRow {
    pub agent: QtAgent,
    pub mean_profit: f64,
    pub profit_stdev: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub has_interval: bool,
    pub mean_regret: f64,
    pub mean_buy_fraction: f64,
    pub n_runs: usize,
}

/// Supervised baselines, in report order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QtAlgorithm {
    Ols = 0,
    Persistence = 1,
    Logistic = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QtAccuracy {
    pub algorithm: QtAlgorithm,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Opaque price series.
pub struct QtSeries(PriceSeries);

/// Opaque run configuration, held as `key=value` settings over the defaults.
pub struct QtConfig(BTreeMap<String, String>);

/// Opaque evaluation result for all four agents.
pub struct QtReport(Vec<(AgentKind, EvalReport)>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(msg).ok());
}

/// Message of the last failed call on this thread, or null if none failed.
/// The string stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `body`, converting errors and panics to a status.
fn guard<F>(body: F) -> QtStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => QtStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer passed as {name}"));
            QtStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            QtStatus::from(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            QtStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn read_str<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Usage(format!("{name} is not valid UTF-8"))))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = borrow_mut(out, "out")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

// series -------------------------------------------------------------------

/// Loads a `Date,Open,High,Low,Close[,Adj Close,Volume]` CSV file.
///
/// # Safety
/// `path` and `company` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qt_series_load(
    path: *const c_char,
    company: *const c_char,
    out: *mut *mut QtSeries,
) -> QtStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let company = read_str(company, "company")?;
        let file = File::open(path).map_err(Error::from)?;
        let series = parse_csv(company, file)?;
        store(out, QtSeries(series))
    })
}

/// New series holding only the bars dated on or after `year-month-day`.
///
/// # Safety
/// `series` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qt_series_filter_from(
    series: *const QtSeries,
    year: i32,
    month: u32,
    day: u32,
    out: *mut *mut QtSeries,
) -> QtStatus {
    guard(|| {
        let s = borrow(series, "series")?;
        let cutoff = NaiveDate::from_ymd_opt(year, month, day)
            .ok_or_else(|| Error::Usage(format!("invalid date {year}-{month}-{day}")))?;
        store(out, QtSeries(filter_from(&s.0, cutoff)))
    })
}

/// Number of bars; 0 for a null handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qt_series_len(series: *const QtSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.len())
}

/// Close price of bar `index`.
///
/// # Safety
/// `series` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qt_series_close(series: *const QtSeries, index: usize, out: *mut f64) -> QtStatus {
    guard(|| {
        let s = borrow(series, "series")?;
        let bar = s.0.bars().get(index).ok_or_else(|| {
            Error::Usage(format!("index {index} out of range for {} bars", s.0.len()))
        })?;
        *borrow_mut(out, "out")? = bar.close;
        Ok(())
    })
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qt_series_free(series: *mut QtSeries) {
    free(series)
}

// config -------------------------------------------------------------------

/// A configuration with every setting at its default.
#[no_mangle]
pub extern "C" fn qt_config_new() -> *mut QtConfig {
    Box::into_raw(Box::new(QtConfig(BTreeMap::new())))
}

/// Sets one setting by its long command-line name, e.g. `"n-runs"`, `"10"`.
/// The value is checked immediately.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qt_config_set(config: *mut QtConfig, key: *const c_char, value: *const c_char) -> QtStatus {
    guard(|| {
        let cfg = borrow_mut(config, "config")?;
        let key = read_str(key, "key")?.replace('_', "-");
        let value = read_str(value, "value")?;
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown key '{key}'")).into());
        }
        let mut next = cfg.0.clone();
        next.insert(key, value.to_string());
        RunConfig::from_map(&next)?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qt_config_free(config: *mut QtConfig) {
    free(config)
}

fn resolve(config: &QtConfig) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::from_map(&config.0)?;
    cfg.validate()?;
    Ok(cfg)
}

// statistics ---------------------------------------------------------------

/// Student confidence interval `mean ± t · stdev / sqrt(n)` at `level`.
///
/// # Safety
/// `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qt_student_ci(
    mean: f64,
    stdev: f64,
    n: usize,
    level: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> QtStatus {
    guard(|| {
        let lo = borrow_mut(lower, "lower")?;
        let hi = borrow_mut(upper, "upper")?;
        (*lo, *hi) = student_ci(mean, stdev, n, level)?;
        Ok(())
    })
}

// evaluation ---------------------------------------------------------------

/// Retrains and scores all four agents on `series` (already filtered) under
/// `config`.
///
/// # Safety
/// `config` and `series` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qt_evaluate(
    config: *const QtConfig,
    series: *const QtSeries,
    out: *mut *mut QtReport,
) -> QtStatus {
    guard(|| {
        let cfg = resolve(borrow(config, "config")?)?;
        let s = borrow(series, "series")?;
        let reports = evaluate_all(&cfg, &s.0)?;
        store(out, QtReport(reports))
    })
}

/// Number of agent rows; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qt_report_len(report: *const QtReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.len())
}

/// Copies row `index` into `out`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qt_report_row(report: *const QtReport, index: usize, out: *mut QtReportRow) -> QtStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        let (kind, rep) = r
            .0
            .get(index)
            .ok_or_else(|| Error::Usage(format!("row {index} out of range for {} rows", r.0.len())))?;
        let (ci_lower, ci_upper) = rep.ci.unwrap_or((f64::NAN, f64::NAN));
        *borrow_mut(out, "out")? = QtReportRow {
            agent: (*kind).into(),
            mean_profit: rep.mean,
            profit_stdev: rep.stdev.unwrap_or(f64::NAN),
            ci_lower,
            ci_upper,
            has_interval: rep.ci.is_some(),
            mean_regret: rep.mean_regret(),
            mean_buy_fraction: rep.mean_buy_fraction(),
            n_runs: rep.runs.len(),
        };
        Ok(())
    })
}

/// Writes `results_<company>.csv` and `histogram_<company>.csv` into `out_dir`.
///
/// # Safety
/// `report` must be a live handle; `company` and `out_dir` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qt_report_write(
    report: *const QtReport,
    company: *const c_char,
    out_dir: *const c_char,
) -> QtStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        let company = read_str(company, "company")?;
        let dir = read_str(out_dir, "out_dir")?;
        write_report(&r.0, company, Path::new(dir))?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qt_report_free(report: *mut QtReport) {
    free(report)
}

// prediction ---------------------------------------------------------------

/// Runs the regression, persistence and logistic baselines on `series`.
/// Writes up to `capacity` rows into `out` and the total row count (3) into
/// `written`.
///
/// # Safety
/// `config` and `series` must be live handles; `out` must hold `capacity`
/// rows; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qt_predict(
    config: *const QtConfig,
    series: *const QtSeries,
    out: *mut QtAccuracy,
    capacity: usize,
    written: *mut usize,
) -> QtStatus {
    guard(|| {
        let cfg = resolve(borrow(config, "config")?)?;
        let s = borrow(series, "series")?;
        let count = borrow_mut(written, "written")?;
        if out.is_null() && capacity > 0 {
            return Err(Failure::Null("out"));
        }
        let report = run_prediction(&s.0, cfg.tol, &cfg.logistic())?;
        let rows: Vec<QtAccuracy> = report
            .rows
            .iter()
            .map(|r| QtAccuracy {
                algorithm: match r.algorithm {
                    "ols" => QtAlgorithm::Ols,
                    "persistence" => QtAlgorithm::Persistence,
                    _ => QtAlgorithm::Logistic,
                },
                train_accuracy: r.train_accuracy,
                test_accuracy: r.test_accuracy,
            })
            .collect();
        for (i, row) in rows.iter().take(capacity).enumerate() {
            *out.add(i) = *row;
        }
        *count = rows.len();
        Ok(())
    })
}
