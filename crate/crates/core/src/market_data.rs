//! Daily adjusted-close price panels: loading, missing-data screening,
//! forward-fill imputation and random universe sampling.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, ArtifactMeta};

/// Sentinel stored in the matrix for an absent observation. Zero is never
/// used because it looks like a legal price.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Date-indexed adjusted-close matrix, stored column-major (one vector per ticker).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl PriceTable {
    /// Builds a table, checking that dates strictly increase, that every
    /// column matches the date index and has at least one observation, and
    /// that every present price is positive.
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if tickers.len() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} tickers but {} columns",
                tickers.len(),
                columns.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            if w[0] == w[1] {
                return Err(Error::DuplicateDate(w[0].format(DATE_FORMAT).to_string()));
            }
            return Err(Error::InvalidArgument("dates must be strictly increasing".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &tickers {
            if !seen.insert(t.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate ticker {t}")));
            }
        }
        for (ticker, col) in tickers.iter().zip(&columns) {
            if col.len() != dates.len() {
                return Err(Error::DimensionMismatch(format!(
                    "column {ticker} has {} rows, expected {}",
                    col.len(),
                    dates.len()
                )));
            }
            if col.iter().all(|v| is_missing(*v)) {
                return Err(Error::InvalidArgument(format!("column {ticker} is empty")));
            }
            if let Some(bad) = col.iter().find(|v| !is_missing(**v) && !(**v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument(format!(
                    "column {ticker} has a non-positive price {bad}"
                )));
            }
        }
        Ok(Self {
            dates,
            tickers,
            columns,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    /// (dates, tickers)
    pub fn dims(&self) -> (usize, usize) {
        (self.n_dates(), self.n_tickers())
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    pub fn column_by_ticker(&self, ticker: &str) -> Option<&[f64]> {
        self.ticker_index(ticker).map(|j| self.column(j))
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.columns[j][t]
    }

    pub fn missing_count(&self) -> usize {
        self.columns
            .iter()
            .map(|c| c.iter().filter(|v| is_missing(**v)).count())
            .sum()
    }

    /// Restricts the table to `tickers`, in the order given.
    pub fn select(&self, tickers: &[String]) -> Result<PriceTable> {
        let mut columns = Vec::with_capacity(tickers.len());
        for t in tickers {
            let j = self
                .ticker_index(t)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown ticker {t}")))?;
            columns.push(self.columns[j].clone());
        }
        PriceTable::new(self.dates.clone(), tickers.to_vec(), columns)
    }

    /// Serializes as `date,<T1>,...` with empty cells for missing values.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date");
        for t in &self.tickers {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (i, d) in self.dates.iter().enumerate() {
            out.push_str(&d.format(DATE_FORMAT).to_string());
            for col in &self.columns {
                out.push(',');
                let v = col[i];
                if !is_missing(v) {
                    out.push_str(&format!("{v:?}"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, meta: Option<&ArtifactMeta>) -> Result<()> {
        io::write_text(path, meta, &self.to_csv_string())
    }
}

/// Delimited-table schema for price input.
#[derive(Debug, Clone, Copy)]
pub struct TableFormat {
    pub delimiter: u8,
}

impl Default for TableFormat {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

pub fn load_prices(path: &Path) -> Result<PriceTable> {
    load_prices_with(path, TableFormat::default())
}

pub fn load_prices_with(path: &Path, format: TableFormat) -> Result<PriceTable> {
    let text = io::read_text(path)?;
    parse_prices(&text, format)
}

/// Parses a price table. Rows are sorted ascending by date; repeated dates
/// are rejected.
pub fn parse_prices(text: &str, format: TableFormat) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "header must be date followed by at least one ticker".into(),
        });
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|e| Error::Parse {
            line,
            column: 1,
            message: format!("bad date {:?}: {e}", &rec[0]),
        })?;
        let mut values = Vec::with_capacity(tickers.len());
        for (j, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() {
                values.push(MISSING);
            } else {
                values.push(io::parse_f64(cell, line, j + 1)?);
            }
        }
        rows.push((date, values));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0.format(DATE_FORMAT).to_string()));
    }
    let mut columns = vec![Vec::with_capacity(rows.len()); tickers.len()];
    let mut dates = Vec::with_capacity(rows.len());
    for (d, values) in rows {
        dates.push(d);
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    PriceTable::new(dates, tickers, columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickerMissingStats {
    pub ticker: String,
    pub missing_ratio: f64,
    pub longest_gap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub ticker: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssetFilterReport {
    pub stats: Vec<TickerMissingStats>,
    pub excluded: Vec<Exclusion>,
}

/// Fraction of missing entries and the longest run of consecutive missing days.
pub fn missing_profile(column: &[f64]) -> (f64, usize) {
    let mut missing = 0usize;
    let mut run = 0usize;
    let mut longest = 0usize;
    for &v in column {
        if is_missing(v) {
            missing += 1;
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    let ratio = if column.is_empty() {
        0.0
    } else {
        missing as f64 / column.len() as f64
    };
    (ratio, longest)
}

/// Drops tickers whose missing ratio exceeds `max_ratio`, whose longest
/// missing run exceeds `max_gap` days, or whose first observation is missing
/// (nothing to forward-fill from).
pub fn filter_assets(table: &PriceTable, max_ratio: f64, max_gap: usize) -> Result<(PriceTable, AssetFilterReport)> {
    if !(0.0..=1.0).contains(&max_ratio) {
        return Err(Error::InvalidArgument(format!("max_ratio {max_ratio} not in [0,1]")));
    }
    if max_gap < 1 {
        return Err(Error::InvalidArgument("max_gap must be at least 1".into()));
    }
    let mut report = AssetFilterReport::default();
    let mut kept = Vec::new();
    for (j, ticker) in table.tickers().iter().enumerate() {
        let (ratio, gap) = missing_profile(table.column(j));
        let mut reasons = Vec::new();
        if ratio > max_ratio {
            reasons.push(format!("missing ratio {ratio:.4} > {max_ratio}"));
        }
        if gap > max_gap {
            reasons.push(format!("missing gap of {gap} days > {max_gap}"));
        }
        if table.column(j).first().is_some_and(|v| is_missing(*v)) {
            reasons.push("first observation missing".into());
        }
        if reasons.is_empty() {
            kept.push(ticker.clone());
        } else {
            report.excluded.push(Exclusion {
                ticker: ticker.clone(),
                reason: reasons.join("; "),
            });
        }
        report.stats.push(TickerMissingStats {
            ticker: ticker.clone(),
            missing_ratio: ratio,
            longest_gap: gap,
        });
    }
    if kept.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    Ok((table.select(&kept)?, report))
}

/// Replaces each missing entry with the previous day's (already filled) value.
pub fn forward_fill(table: &PriceTable) -> Result<PriceTable> {
    let mut columns = Vec::with_capacity(table.n_tickers());
    for (j, ticker) in table.tickers().iter().enumerate() {
        let src = table.column(j);
        if src.first().is_some_and(|v| is_missing(*v)) {
            return Err(Error::NoFillSource {
                ticker: ticker.clone(),
            });
        }
        let mut col = Vec::with_capacity(src.len());
        let mut last = f64::NAN;
        for &v in src {
            if !is_missing(v) {
                last = v;
            }
            col.push(last);
        }
        columns.push(col);
    }
    PriceTable::new(table.dates().to_vec(), table.tickers().to_vec(), columns)
}

/// Draws `n` distinct tickers uniformly without replacement. The result is
/// returned in the table's column order so downstream pair indices are stable.
pub fn sample_universe(table: &PriceTable, n: usize, seed: u64) -> Result<Vec<String>> {
    sample_tickers(table.tickers(), n, seed)
}

pub fn sample_tickers(pool: &[String], n: usize, seed: u64) -> Result<Vec<String>> {
    if n > pool.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

/// Simple (or log) daily returns of a price vector; length shrinks by one.
pub fn returns(prices: &[f64], log: bool) -> Vec<f64> {
    prices
        .windows(2)
        .map(|w| if log { (w[1] / w[0]).ln() } else { w[1] / w[0] - 1.0 })
        .collect()
}
