//! Daily OHLC price histories: CSV ingestion, date filtering, the 80/10/10
//! chronological split, fixed-length time windows and daily movements.

use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Default start of the usable history.
pub fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2005, 1, 1).expect("valid date")
}

/// One trading day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhlcBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    /// Parsed when present, never used by the agents.
    pub adj_close: Option<f64>,
    /// Parsed when present, never used by the agents.
    pub volume: Option<f64>,
}

impl OhlcBar {
    pub fn new(date: NaiveDate, open: f64, high: f64, low: f64, close: f64) -> Self {
        Self {
            date,
            open,
            high,
            low,
            close,
            adj_close: None,
            volume: None,
        }
    }

    /// Checks the price invariants, returning a description of the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be a positive finite price, got {v}"));
            }
        }
        if self.low > self.open.min(self.close) {
            return Err(format!(
                "low {} exceeds min(open, close) = {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!(
                "high {} is below max(open, close) = {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        if let Some(v) = self.volume {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("volume must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// The four prices in state order: open, high, low, close.
    pub fn prices(&self) -> [f64; 4] {
        [self.open, self.high, self.low, self.close]
    }

    pub fn movement(&self) -> Movement {
        movement(self)
    }
}

/// Direction of a single day: the sign of close minus open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Movement {
    Down,
    Up,
}

/// Up when the close is at or above the open. A flat day counts as Up.
pub fn movement(bar: &OhlcBar) -> Movement {
    if bar.close >= bar.open {
        Movement::Up
    } else {
        Movement::Down
    }
}

/// Ordered daily history of one company.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub company: String,
    bars: Vec<OhlcBar>,
}

impl PriceSeries {
    /// Builds a series, checking every bar and strictly increasing dates.
    /// Row numbers in errors are 1-based bar positions.
    pub fn new(company: impl Into<String>, bars: Vec<OhlcBar>) -> Result<Self> {
        for (i, bar) in bars.iter().enumerate() {
            bar.validate().map_err(|msg| Error::Validation {
                row: i as u64 + 1,
                msg,
            })?;
            if i > 0 && bars[i - 1].date >= bar.date {
                return Err(Error::Ordering {
                    row: i as u64 + 1,
                    date: bar.date.to_string(),
                    previous: bars[i - 1].date.to_string(),
                });
            }
        }
        Ok(Self {
            company: company.into(),
            bars,
        })
    }

    pub fn empty(company: impl Into<String>) -> Self {
        Self {
            company: company.into(),
            bars: Vec::new(),
        }
    }

    pub fn bars(&self) -> &[OhlcBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> PriceSeries {
        PriceSeries {
            company: self.company.clone(),
            bars: self.bars[range].to_vec(),
        }
    }
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn parse_price(field: &str, column: &str, row: u64) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        msg: format!("cannot parse {column} value {field:?} as a number"),
    })
}

fn parse_optional(field: Option<&str>, column: &str, row: u64) -> Result<Option<f64>> {
    match field.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => parse_price(s, column, row).map(Some),
    }
}

/// Reads a Yahoo! Finance style daily export.
///
/// The header must name `Date`, `Open`, `High`, `Low` and `Close` (any order,
/// case-insensitive). `Adj Close` and `Volume` are read when present.
pub fn parse_csv<R: Read>(company: impl Into<String>, reader: R) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        find_column(&headers, name).ok_or_else(|| Error::Parse {
            row: 1,
            msg: format!("header is missing the {name} column"),
        })
    };
    let (c_date, c_open, c_high, c_low, c_close) =
        (col("Date")?, col("Open")?, col("High")?, col("Low")?, col("Close")?);
    let c_adj = find_column(&headers, "Adj Close");
    let c_vol = find_column(&headers, "Volume");

    let mut bars = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                msg: format!(
                    "expected {} columns, found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let date_field = record[c_date].trim();
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d").map_err(|_| Error::Parse {
            row,
            msg: format!("cannot parse date {date_field:?} (expected YYYY-MM-DD)"),
        })?;
        let bar = OhlcBar {
            date,
            open: parse_price(&record[c_open], "Open", row)?,
            high: parse_price(&record[c_high], "High", row)?,
            low: parse_price(&record[c_low], "Low", row)?,
            close: parse_price(&record[c_close], "Close", row)?,
            adj_close: parse_optional(c_adj.map(|c| &record[c]), "Adj Close", row)?,
            volume: parse_optional(c_vol.map(|c| &record[c]), "Volume", row)?,
        };
        bar.validate()
            .map_err(|msg| Error::Validation { row, msg })?;
        if let Some(prev) = bars.last().map(|b: &OhlcBar| b.date) {
            if prev >= date {
                return Err(Error::Ordering {
                    row,
                    date: date.to_string(),
                    previous: prev.to_string(),
                });
            }
        }
        bars.push(bar);
    }
    Ok(PriceSeries {
        company: company.into(),
        bars,
    })
}

/// Writes a series in the same layout [`parse_csv`] reads. Optional columns
/// are emitted only when at least one bar carries them.
pub fn write_csv<W: Write>(series: &PriceSeries, writer: W) -> Result<()> {
    let with_adj = series.bars.iter().any(|b| b.adj_close.is_some());
    let with_vol = series.bars.iter().any(|b| b.volume.is_some());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["Date", "Open", "High", "Low", "Close"];
    if with_adj {
        header.push("Adj Close");
    }
    if with_vol {
        header.push("Volume");
    }
    wtr.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in &series.bars {
        let mut rec = vec![
            b.date.format("%Y-%m-%d").to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
        ];
        if with_adj {
            rec.push(opt(b.adj_close));
        }
        if with_vol {
            rec.push(opt(b.volume));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Keeps bars dated on or after `cutoff`.
pub fn filter_from(series: &PriceSeries, cutoff: NaiveDate) -> PriceSeries {
    PriceSeries {
        company: series.company.clone(),
        bars: series
            .bars
            .iter()
            .filter(|b| b.date >= cutoff)
            .copied()
            .collect(),
    }
}

/// Chronological train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSeries {
    pub train: PriceSeries,
    pub validation: PriceSeries,
    pub test: PriceSeries,
}

/// `⌊0.8n⌋` / `⌊0.1n⌋` / remainder, earliest bars in train.
pub fn split_80_10_10(series: &PriceSeries) -> Result<SplitSeries> {
    let n = series.len();
    if n < 10 {
        return Err(Error::Sizing { needed: 10, got: n });
    }
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    Ok(SplitSeries {
        train: series.slice(0..n_train),
        validation: series.slice(n_train..n_train + n_val),
        test: series.slice(n_train + n_val..n),
    })
}

/// `w` consecutive bars of a parent series; one episode's purchase horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeWindow {
    start: usize,
    bars: Vec<OhlcBar>,
}

impl TimeWindow {
    /// Index of the first bar in the parent series.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn bars(&self) -> &[OhlcBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Close of the first day; the reference price for profit.
    pub fn anchor(&self) -> f64 {
        self.bars[0].close
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn min_close(&self) -> f64 {
        self.bars
            .iter()
            .map(|b| b.close)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Tiles `series` into non-overlapping windows of `w` bars, dropping the
/// trailing remainder.
pub fn make_windows(series: &PriceSeries, w: usize) -> Result<Vec<TimeWindow>> {
    if w < 2 {
        return Err(Error::Config(format!("window length must be at least 2, got {w}")));
    }
    Ok(series
        .bars
        .chunks_exact(w)
        .enumerate()
        .map(|(i, chunk)| TimeWindow {
            start: i * w,
            bars: chunk.to_vec(),
        })
        .collect())
}
