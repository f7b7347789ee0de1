//! Rolling-window correlation panel and walk-forward slicing.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, ArtifactMeta};
use crate::market_data::{self, PriceTable};

/// Number of steps in every walk-forward slice.
pub const SLICE_LEN: usize = 21;

/// One (pair, offset) series of rolling-window correlation coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrSeries {
    pub first: String,
    pub second: String,
    /// 1-based starting day of the first window.
    pub offset: usize,
    pub values: Vec<f64>,
}

impl CorrSeries {
    pub fn pair(&self) -> (&str, &str) {
        (&self.first, &self.second)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceRole {
    Train,
    Dev,
    Test1,
    Test2,
}

impl SliceRole {
    pub const ALL: [SliceRole; 4] = [SliceRole::Train, SliceRole::Dev, SliceRole::Test1, SliceRole::Test2];

    /// 0-based start of the slice within a series.
    pub fn start(self) -> usize {
        match self {
            SliceRole::Train => 0,
            SliceRole::Dev => 1,
            SliceRole::Test1 => 2,
            SliceRole::Test2 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SliceRole::Train => "train",
            SliceRole::Dev => "dev",
            SliceRole::Test1 => "test1",
            SliceRole::Test2 => "test2",
        }
    }

    /// 0-based index into the full series of the slice's last (target) step.
    pub fn target_index(self) -> usize {
        self.start() + SLICE_LEN - 1
    }
}

impl fmt::Display for SliceRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SliceRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SliceRole::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown slice role {s:?}")))
    }
}

/// The four overlapping 21-step sub-series used for walk-forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkForwardSlices {
    pub train: Vec<f64>,
    pub dev: Vec<f64>,
    pub test1: Vec<f64>,
    pub test2: Vec<f64>,
}

impl WalkForwardSlices {
    pub fn get(&self, role: SliceRole) -> &[f64] {
        match role {
            SliceRole::Train => &self.train,
            SliceRole::Dev => &self.dev,
            SliceRole::Test1 => &self.test1,
            SliceRole::Test2 => &self.test2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelConfig {
    pub window: usize,
    pub stride: usize,
    pub offsets: Vec<usize>,
    /// Every series is truncated to this many steps.
    pub steps: usize,
    /// Correlate daily returns instead of price levels.
    pub use_returns: bool,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            window: 100,
            stride: 100,
            offsets: vec![1, 21, 41, 61, 81],
            steps: 24,
            use_returns: false,
        }
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Number of full windows that fit, or 0 if none.
pub fn window_count(len: usize, window: usize, stride: usize, offset: usize) -> usize {
    if offset == 0 || stride == 0 || len + 1 < offset + window {
        return 0;
    }
    (len + 1 - offset - window) / stride + 1
}

/// Day span (0-based, inclusive start, exclusive end) of the `step`-th
/// window (0-based).
pub fn window_span(step: usize, window: usize, stride: usize, offset: usize) -> std::ops::Range<usize> {
    let start = offset - 1 + step * stride;
    start..start + window
}

/// Correlation over consecutive windows `[offset + k*stride, offset + k*stride + window - 1]`
/// (1-based days), emitted until the series runs out.
pub fn rolling_correlation(a: &[f64], b: &[f64], window: usize, stride: usize, offset: usize) -> Result<Vec<f64>> {
    rolling_correlation_with(a, b, window, stride, offset, false)
}

pub fn rolling_correlation_with(
    a: &[f64],
    b: &[f64],
    window: usize,
    stride: usize,
    offset: usize,
    use_returns: bool,
) -> Result<Vec<f64>> {
    if window < 2 || stride < 1 || offset < 1 {
        return Err(Error::InvalidArgument(format!(
            "window={window}, stride={stride}, offset={offset}"
        )));
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let count = window_count(a.len(), window, stride, offset);
    if count == 0 {
        return Err(Error::SeriesTooShort {
            needed: offset + window - 1,
            got: a.len(),
        });
    }
    (0..count)
        .map(|k| {
            let span = window_span(k, window, stride, offset);
            if use_returns {
                pearson(
                    &market_data::returns(&a[span.clone()], false),
                    &market_data::returns(&b[span], false),
                )
            } else {
                pearson(&a[span.clone()], &b[span])
            }
        })
        .collect()
}

/// One series per unordered ticker pair per offset, ordered by pair (column
/// order of `table`) and then by offset.
pub fn build_corr_panel(table: &PriceTable, config: &PanelConfig) -> Result<Vec<CorrSeries>> {
    let n = table.n_tickers();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two tickers".into()));
    }
    if config.offsets.is_empty() {
        return Err(Error::InvalidArgument("offsets must be nonempty".into()));
    }
    let tasks: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).flat_map(move |j| config.offsets.iter().map(move |&o| (i, j, o))))
        .collect();
    tasks
        .into_par_iter()
        .map(|(i, j, offset)| {
            let wrap = |source: Error| Error::DegenerateWindow {
                first: table.tickers()[i].clone(),
                second: table.tickers()[j].clone(),
                offset,
                source: Box::new(source),
            };
            let mut values = rolling_correlation_with(
                table.column(i),
                table.column(j),
                config.window,
                config.stride,
                offset,
                config.use_returns,
            )
            .map_err(wrap)?;
            if values.len() < config.steps {
                return Err(wrap(Error::SeriesTooShort {
                    needed: config.steps,
                    got: values.len(),
                }));
            }
            values.truncate(config.steps);
            Ok(CorrSeries {
                first: table.tickers()[i].clone(),
                second: table.tickers()[j].clone(),
                offset,
                values,
            })
        })
        .collect()
}

/// Splits a 24-step series into the four overlapping 21-step slices.
pub fn split_walk_forward(series: &CorrSeries) -> Result<WalkForwardSlices> {
    split_values(&series.values)
}

pub fn split_values(values: &[f64]) -> Result<WalkForwardSlices> {
    let expected = SLICE_LEN + 3;
    if values.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: values.len(),
        });
    }
    let slice = |r: SliceRole| values[r.start()..r.start() + SLICE_LEN].to_vec();
    Ok(WalkForwardSlices {
        train: slice(SliceRole::Train),
        dev: slice(SliceRole::Dev),
        test1: slice(SliceRole::Test1),
        test2: slice(SliceRole::Test2),
    })
}

pub fn write_panel(path: &Path, meta: Option<&ArtifactMeta>, panel: &[CorrSeries]) -> Result<()> {
    let mut body = String::new();
    for s in panel {
        body.push_str(&format!("{},{},{},{}\n", s.first, s.second, s.offset, io::join_f64(&s.values)));
    }
    io::write_text(path, meta, &body)
}

pub fn read_panel(path: &Path) -> Result<Vec<CorrSeries>> {
    let text = io::read_text(path)?;
    let mut rdr = io::csv_reader(&text, false);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 4 {
            return Err(Error::Parse {
                line: line + 1,
                column: rec.len(),
                message: "panel rows need ticker_i,ticker_j,offset,values...".into(),
            });
        }
        let offset = rec[2].parse().map_err(|_| Error::Parse {
            line: line + 1,
            column: 3,
            message: format!("bad offset {:?}", &rec[2]),
        })?;
        let values = rec
            .iter()
            .enumerate()
            .skip(3)
            .map(|(j, c)| io::parse_f64(c, line + 1, j + 1))
            .collect::<Result<Vec<_>>>()?;
        out.push(CorrSeries {
            first: rec[0].to_string(),
            second: rec[1].to_string(),
            offset,
            values,
        });
    }
    Ok(out)
}

/// Writes `train.csv`, `dev.csv`, `test1.csv` and `test2.csv` under `dir`.
pub fn write_slices(dir: &Path, meta: Option<&ArtifactMeta>, panel: &[CorrSeries]) -> Result<()> {
    let slices = panel.iter().map(split_walk_forward).collect::<Result<Vec<_>>>()?;
    for role in SliceRole::ALL {
        let rows: Vec<Vec<f64>> = slices.iter().map(|s| s.get(role).to_vec()).collect();
        io::write_matrix(&dir.join(format!("{}.csv", role.name())), meta, &rows)?;
    }
    Ok(())
}
