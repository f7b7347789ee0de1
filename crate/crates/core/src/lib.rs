//! Forecasting pairwise stock correlation coefficients with an ARIMA-LSTM
//! hybrid: ARIMA captures the linear structure of each rolling-correlation
//! series, and an LSTM learns the remaining residual.
//!
//! Pipeline: [`market_data`] cleans a price table, [`corrgen`] builds the
//! correlation panel, [`arima`] fits each walk-forward slice and emits
//! residuals, [`neuralnet`] trains the residual model, [`baselines`] supplies
//! the classical predictors, [`eval`] scores everything, and [`pipeline`]
//! runs the stages over a run directory.

pub mod arima;
pub mod baselines;
pub mod config;
pub mod corrgen;
pub mod error;
pub mod eval;
pub mod io;
pub mod market_data;
pub mod neuralnet;
pub mod pipeline;
pub mod synth;

pub use arima::{ArimaFit, ArimaOrder, SeriesId, SupervisedResidual};
pub use baselines::{Baseline, BetaEstimate, CorrMatrix, SectorMap};
pub use config::RunConfig;
pub use corrgen::{CorrSeries, PanelConfig, SliceRole, WalkForwardSlices};
pub use error::{Error, Result};
pub use eval::{ComparisonTable, MetricSet, PredictionRow, RobustnessRun};
pub use market_data::PriceTable;
pub use neuralnet::{DenseParams, EpochRecord, LstmParams, Model, TrainConfig};
pub use pipeline::{ResidualRecord, Run};
