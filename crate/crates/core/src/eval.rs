//! Prediction metrics, the five-model comparison table, learning-curve
//! export and the resampled-asset robustness study.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrgen::{self, PanelConfig, SliceRole};
use crate::error::{Error, Result};
use crate::io::{self, ArtifactMeta};
use crate::market_data::{self, PriceTable};
use crate::neuralnet::{select_epoch, Checkpoint, EpochRecord};
use crate::pipeline::{self, ArimaStageConfig};

/// Values within this distance of a column minimum are marked best.
pub const BEST_TOLERANCE: f64 = 5e-5;

pub const HYBRID: &str = "hybrid";

/// Comparison rows, in display order.
pub const MODELS: [&str; 5] = [
    HYBRID,
    "full_historical",
    "constant_correlation",
    "single_index",
    "multi_group",
];

pub const DATASETS: [SliceRole; 3] = [SliceRole::Dev, SliceRole::Test1, SliceRole::Test2];

fn display_name(model: &str) -> &str {
    match model {
        HYBRID => "ARIMA-LSTM",
        "full_historical" => "Full Historical",
        "constant_correlation" => "Constant Correlation",
        "single_index" => "Single Index",
        "multi_group" => "Multi-Group",
        other => other,
    }
}

/// One predicted target: the pair, its offset, the slice and both values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub first: String,
    pub second: String,
    pub offset: usize,
    pub role: SliceRole,
    pub yhat: f64,
    pub y: f64,
}

pub fn write_predictions(path: &Path, meta: Option<&ArtifactMeta>, rows: &[PredictionRow]) -> Result<()> {
    let mut body = String::from("ticker_i,ticker_j,offset,slice,yhat,y\n");
    for r in rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{}",
            r.first,
            r.second,
            r.offset,
            r.role,
            io::join_f64(&[r.yhat, r.y])
        );
    }
    io::write_text(path, meta, &body)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let text = io::read_text(path)?;
    let mut rdr = io::csv_reader(&text, true);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 6 {
            return Err(Error::LengthMismatch {
                expected: 6,
                got: rec.len(),
            });
        }
        let offset = rec[2].parse().map_err(|_| Error::Parse {
            line,
            column: 3,
            message: format!("bad offset {:?}", &rec[2]),
        })?;
        out.push(PredictionRow {
            first: rec[0].to_string(),
            second: rec[1].to_string(),
            offset,
            role: rec[3].parse()?,
            yhat: io::parse_f64(&rec[4], line, 5)?,
            y: io::parse_f64(&rec[5], line, 6)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

pub fn metrics(yhat: &[f64], y: &[f64]) -> Result<MetricSet> {
    if yhat.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = y.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (a, b) in yhat.iter().zip(y) {
        se += (b - a) * (b - a);
        ae += (b - a).abs();
    }
    let mse = se / n;
    Ok(MetricSet {
        mse,
        rmse: mse.sqrt(),
        mae: ae / n,
    })
}

pub fn metrics_of(rows: &[PredictionRow]) -> Result<MetricSet> {
    let yhat: Vec<f64> = rows.iter().map(|r| r.yhat).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.y).collect();
    metrics(&yhat, &y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BestMarks {
    pub mse: bool,
    pub rmse: bool,
    pub mae: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub model: String,
    pub dataset: SliceRole,
    pub metrics: MetricSet,
    pub best: BestMarks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub models: Vec<String>,
    pub datasets: Vec<SliceRole>,
    /// Model-major, then dataset.
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonTable {
    /// Builds the table from per-(model, dataset) metrics; every model in
    /// [`MODELS`] must be present for every dataset in [`DATASETS`].
    pub fn from_metrics(values: &BTreeMap<(String, SliceRole), MetricSet>) -> Result<Self> {
        let mut cells = Vec::new();
        for model in MODELS {
            for dataset in DATASETS {
                let m = values
                    .get(&(model.to_string(), dataset))
                    .ok_or_else(|| Error::MissingCombination(format!("{model} on {dataset}")))?;
                cells.push(ComparisonCell {
                    model: model.to_string(),
                    dataset,
                    metrics: *m,
                    best: BestMarks::default(),
                });
            }
        }
        for dataset in DATASETS {
            let column = |f: fn(&MetricSet) -> f64| {
                cells
                    .iter()
                    .filter(|c| c.dataset == dataset)
                    .map(|c| f(&c.metrics))
                    .fold(f64::INFINITY, f64::min)
            };
            let (min_mse, min_rmse, min_mae) = (column(|m| m.mse), column(|m| m.rmse), column(|m| m.mae));
            for c in cells.iter_mut().filter(|c| c.dataset == dataset) {
                c.best = BestMarks {
                    mse: c.metrics.mse - min_mse <= BEST_TOLERANCE,
                    rmse: c.metrics.rmse - min_rmse <= BEST_TOLERANCE,
                    mae: c.metrics.mae - min_mae <= BEST_TOLERANCE,
                };
            }
        }
        Ok(Self {
            models: MODELS.iter().map(|m| m.to_string()).collect(),
            datasets: DATASETS.to_vec(),
            cells,
        })
    }

    pub fn get(&self, model: &str, dataset: SliceRole) -> Option<&ComparisonCell> {
        self.cells.iter().find(|c| c.model == model && c.dataset == dataset)
    }

    /// Fixed-width layout: one row per model, MSE/RMSE/MAE per dataset;
    /// `*` marks column minima.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<22}", "");
        for d in &self.datasets {
            let _ = write!(out, "| {:<35}", d.name().to_uppercase());
        }
        out.push('\n');
        let _ = write!(out, "{:<22}", "model");
        for _ in &self.datasets {
            let _ = write!(out, "| {:<11}{:<12}{:<12}", "MSE", "RMSE", "MAE");
        }
        out.push('\n');
        out.push_str(&"-".repeat(22 + 37 * self.datasets.len()));
        out.push('\n');
        for model in &self.models {
            let _ = write!(out, "{:<22}", display_name(model));
            for &d in &self.datasets {
                let c = self.get(model, d).expect("complete table");
                let cell = |v: f64, best: bool| format!("{v:.4}{}", if best { "*" } else { "" });
                let _ = write!(
                    out,
                    "| {:<11}{:<12}{:<12}",
                    cell(c.metrics.mse, c.best.mse),
                    cell(c.metrics.rmse, c.best.rmse),
                    cell(c.metrics.mae, c.best.mae)
                );
            }
            out.push('\n');
        }
        out.push_str("* within 5e-5 of the column minimum\n");
        out
    }
}

/// Metrics for every (model, dataset) from prediction rows, then the table.
pub fn compare_models(predictions: &BTreeMap<String, Vec<PredictionRow>>) -> Result<ComparisonTable> {
    let mut values = BTreeMap::new();
    for (model, rows) in predictions {
        for dataset in DATASETS {
            let subset: Vec<PredictionRow> = rows.iter().filter(|r| r.role == dataset).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            values.insert((model.clone(), dataset), metrics_of(&subset)?);
        }
    }
    ComparisonTable::from_metrics(&values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub meta: ArtifactMeta,
    pub table: ComparisonTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<RobustnessSummary>,
}

/// Writes `learning_curve.csv` and returns the selected epoch.
pub fn learning_curve_export(path: &Path, meta: Option<&ArtifactMeta>, records: &[EpochRecord]) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let selected = if records.len() == 1 {
        records[0].epoch
    } else {
        select_epoch(records)?
    };
    let mut body = String::from("epoch,train_mse,dev_mse,train_mae,dev_mae,selected\n");
    for r in records {
        let _ = writeln!(
            body,
            "{},{},{}",
            r.epoch,
            io::join_f64(&[r.train_mse, r.dev_mse, r.train_mae, r.dev_mae]),
            u8::from(r.epoch == selected)
        );
    }
    io::write_text(path, meta, &body)?;
    Ok(selected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustnessConfig {
    pub iterations: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Slice whose targets are scored.
    pub role: SliceRole,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            sample_size: 10,
            seed: 0,
            role: SliceRole::Test2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRun {
    pub iteration: usize,
    pub tickers: Vec<String>,
    pub rows: usize,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub iterations: usize,
    pub min_mse: f64,
    pub max_mse: f64,
    pub mean_mse: f64,
}

impl RobustnessSummary {
    pub fn of(runs: &[RobustnessRun]) -> Option<Self> {
        if runs.is_empty() {
            return None;
        }
        let mse: Vec<f64> = runs.iter().map(|r| r.metrics.mse).collect();
        Some(Self {
            iterations: runs.len(),
            min_mse: mse.iter().copied().fold(f64::INFINITY, f64::min),
            max_mse: mse.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_mse: mse.iter().sum::<f64>() / mse.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub meta: ArtifactMeta,
    pub config: RobustnessConfig,
    pub runs: Vec<RobustnessRun>,
    pub summary: Option<RobustnessSummary>,
    pub note: String,
}

/// Everything one resampling iteration needs besides the ticker sample.
#[derive(Debug, Clone, Copy)]
pub struct RobustnessInputs<'a> {
    pub prices: &'a PriceTable,
    pub checkpoint: &'a Checkpoint,
    pub panel: &'a PanelConfig,
    pub arima: &'a ArimaStageConfig,
}

/// Per iteration: sample tickers from `pool` (disjoint from `excluded`),
/// rebuild the correlation panel and ARIMA residuals, and score the
/// hybrid's predictions on `config.role`.
pub fn robustness_study(
    inputs: RobustnessInputs<'_>,
    excluded: &[String],
    pool: &[String],
    config: &RobustnessConfig,
) -> Result<Vec<RobustnessRun>> {
    if let Some(t) = pool.iter().find(|t| excluded.contains(t)) {
        return Err(Error::InvalidArgument(format!("pool ticker {t} belongs to the training universe")));
    }
    if pool.len() < config.sample_size {
        return Err(Error::InsufficientPool {
            needed: config.sample_size,
            available: pool.len(),
        });
    }
    (0..config.iterations)
        .into_par_iter()
        .map(|iteration| {
            let seed = config.seed.wrapping_add(iteration as u64);
            let tickers = market_data::sample_tickers(pool, config.sample_size, seed)?;
            let table = inputs.prices.select(&tickers)?;
            let panel = corrgen::build_corr_panel(&table, inputs.panel)?;
            let residuals = pipeline::fit_residuals(&panel, &[config.role], inputs.arima)?;
            let rows = pipeline::hybrid_predictions(&inputs.checkpoint.model, &residuals.records, inputs.checkpoint.config.inference_scale())?;
            Ok(RobustnessRun {
                iteration,
                tickers,
                rows: rows.len(),
                metrics: metrics_of(&rows)?,
            })
        })
        .collect()
}
