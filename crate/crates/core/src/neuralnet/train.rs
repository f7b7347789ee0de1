//! Mini-batch training loop, per-epoch checkpoints and epoch selection.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_update, AdamState};
use super::bptt::{backward, run, HiddenScale};
use super::Model;
use crate::arima::SupervisedResidual;
use crate::error::{Error, Result};
use crate::io::{self, ArtifactMeta};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Rows per chunk when evaluating a whole dataset.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    L1,
    #[default]
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Regularization {
    pub kind: RegKind,
    pub lambda_w: f64,
    pub lambda_b: f64,
}

impl Regularization {
    pub(crate) fn norm(&self, v: f64) -> f64 {
        match self.kind {
            RegKind::L1 => v.abs(),
            RegKind::L2 => v * v,
        }
    }

    pub(crate) fn norm_derivative(&self, v: f64) -> f64 {
        match self.kind {
            RegKind::L1 => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            RegKind::L2 => 2.0 * v,
        }
    }
}

/// How dropout on the last hidden state is compensated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutScaling {
    /// Units are zeroed during training; at inference the hidden state is
    /// multiplied by the keep probability `1 - p`.
    #[default]
    KeepProbability,
    /// Kept units are divided by `1 - p` during training; inference is unscaled.
    Inverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub regularization: Regularization,
    pub dropout_p: f64,
    pub dropout_scaling: DropoutScaling,
    /// Global gradient-norm cap; off when absent.
    pub clip_norm: Option<f64>,
    /// Stop once train and dev MSE have settled (see [`converged`]).
    pub early_stop: bool,
    pub convergence_window: usize,
    pub convergence_gap: f64,
    pub convergence_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_size: 25,
            batch_size: 500,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 300,
            seed: 0,
            regularization: Regularization::default(),
            dropout_p: 0.0,
            dropout_scaling: DropoutScaling::KeepProbability,
            clip_norm: None,
            early_stop: true,
            convergence_window: 10,
            convergence_gap: 0.01,
            convergence_delta: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_size == 0 {
            return bad("hidden_size must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if self.regularization.lambda_w < 0.0 || self.regularization.lambda_b < 0.0 {
            return bad("regularization strengths must be non-negative");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("ADAM needs beta1, beta2 in [0, 1) and epsilon > 0");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    /// Multiplier on the last hidden state at inference.
    pub fn inference_scale(&self) -> f64 {
        match self.dropout_scaling {
            DropoutScaling::KeepProbability => 1.0 - self.dropout_p,
            DropoutScaling::Inverted => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_mse: f64,
    pub dev_mse: f64,
    pub train_mae: f64,
    pub dev_mae: f64,
}

/// Supervised rows: `x` holds one sequence per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[SupervisedResidual]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.x.len());
        if rows.iter().any(|r| r.x.len() != width) {
            return Err(Error::DimensionMismatch("supervised rows of unequal length".into()));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.x.iter().copied()).collect();
        let x = Array2::from_shape_vec((rows.len(), width), flat).expect("shape from row count");
        Ok(Self {
            x,
            y: rows.iter().map(|r| r.y).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ArtifactMeta>,
    pub epoch: usize,
    pub config: TrainConfig,
    pub record: EpochRecord,
    pub model: Model,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    /// One per completed epoch, in order.
    pub checkpoints: Vec<Checkpoint>,
    pub converged: bool,
}

/// Where per-epoch checkpoints are persisted, as `epoch{n}.json`.
#[derive(Debug, Clone)]
pub struct CheckpointSink {
    pub dir: PathBuf,
    pub meta: Option<ArtifactMeta>,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    io::write_json(path, checkpoint)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let c: Checkpoint = io::read_json(path)?;
    if c.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint version {} (expected {CHECKPOINT_VERSION})",
            c.version
        )));
    }
    c.model.validate()?;
    Ok(c)
}

fn mask_from<R: Rng + ?Sized>(shape: (usize, usize), p: f64, keep_value: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep_value })
}

/// Bernoulli(1 - p) keep mask of zeros and ones.
pub fn dropout_mask(shape: (usize, usize), p: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mask_from(shape, p, 1.0, &mut rng)
}

/// MSE and MAE of the model on a dataset, at inference scaling.
pub fn evaluate(model: &Model, x: ArrayView2<f64>, y: ArrayView1<f64>, hidden_scale: f64) -> Result<(f64, f64)> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scale = if hidden_scale == 1.0 {
        HiddenScale::None
    } else {
        HiddenScale::Scalar(hidden_scale)
    };
    let starts: Vec<usize> = (0..y.len()).step_by(EVAL_CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&s| {
            let e = (s + EVAL_CHUNK).min(y.len());
            let yhat = run(model, x.slice(ndarray::s![s..e, ..]), scale, false)?.yhat;
            let mut se = 0.0;
            let mut ae = 0.0;
            for (a, b) in yhat.iter().zip(y.slice(ndarray::s![s..e])) {
                se += (a - b) * (a - b);
                ae += (a - b).abs();
            }
            Ok((se, ae))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = y.len() as f64;
    let (se, ae) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    Ok((se / n, ae / n))
}

/// Train and dev MSE both moved less than `delta` over the last `window`
/// epochs and sit within `gap` of each other.
pub fn converged(records: &[EpochRecord], window: usize, gap: f64, delta: f64) -> bool {
    if window == 0 || records.len() <= window {
        return false;
    }
    let last = records[records.len() - 1];
    let then = records[records.len() - 1 - window];
    (last.train_mse - last.dev_mse).abs() < gap
        && (last.train_mse - then.train_mse).abs() < delta
        && (last.dev_mse - then.dev_mse).abs() < delta
}

fn clip(grads: &mut Model, max_norm: f64) {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Mini-batch ADAM over shuffled training rows, evaluating train and dev
/// after every epoch.
pub fn train(train: &Dataset, dev: &Dataset, config: &TrainConfig, sink: Option<&CheckpointSink>) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyInput);
    }
    if train.x.ncols() != dev.x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "train rows have {} steps, dev rows {}",
            train.x.ncols(),
            dev.x.ncols()
        )));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let mut model = Model::init(config.hidden_size, 1, &mut init_rng);
    let mut state = AdamState::new(model.parameter_count());
    let keep_value = match config.dropout_scaling {
        DropoutScaling::KeepProbability => 1.0,
        DropoutScaling::Inverted => 1.0 / (1.0 - config.dropout_p),
    };
    let hidden_scale = config.inference_scale();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut is_converged = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let xb = train.x.select(Axis(0), batch);
            let yb = train.y.select(Axis(0), batch);
            let mask = (config.dropout_p > 0.0)
                .then(|| mask_from((batch.len(), config.hidden_size), config.dropout_p, keep_value, &mut dropout_rng));
            let (_, mut grads) = backward(&model, xb.view(), yb.view(), &config.regularization, mask.as_ref())?;
            if let Some(c) = config.clip_norm {
                clip(&mut grads, c);
            }
            adam_update(
                &mut model,
                &grads,
                &mut state,
                config.learning_rate,
                config.beta1,
                config.beta2,
                config.epsilon,
            )?;
        }
        if !model.is_finite() {
            return Err(Error::InvalidArgument(format!("parameters diverged in epoch {epoch}")));
        }
        let (train_mse, train_mae) = evaluate(&model, train.x.view(), train.y.view(), hidden_scale)?;
        let (dev_mse, dev_mae) = evaluate(&model, dev.x.view(), dev.y.view(), hidden_scale)?;
        let record = EpochRecord {
            epoch,
            train_mse,
            dev_mse,
            train_mae,
            dev_mae,
        };
        records.push(record);
        let checkpoint = Checkpoint {
            version: CHECKPOINT_VERSION,
            meta: sink.and_then(|s| s.meta.clone()),
            epoch,
            config: config.clone(),
            record,
            model: model.clone(),
        };
        if let Some(s) = sink {
            save_checkpoint(&s.dir.join(format!("epoch{epoch}.json")), &checkpoint)?;
        }
        checkpoints.push(checkpoint);
        if config.early_stop
            && converged(
                &records,
                config.convergence_window,
                config.convergence_gap,
                config.convergence_delta,
            )
        {
            is_converged = true;
            break;
        }
    }
    Ok(TrainOutcome {
        records,
        checkpoints,
        converged: is_converged,
    })
}

fn zscores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Epoch minimising `z(|train - dev|) + z(train + dev)` over MSE, with
/// sample standard deviations; a constant column contributes zero and ties
/// go to the earliest epoch.
pub fn select_epoch(records: &[EpochRecord]) -> Result<usize> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "epoch selection needs at least 2 records, got {}",
            records.len()
        )));
    }
    let diff: Vec<f64> = records.iter().map(|r| (r.train_mse - r.dev_mse).abs()).collect();
    let sum: Vec<f64> = records.iter().map(|r| r.train_mse + r.dev_mse).collect();
    let (zd, zs) = (zscores(&diff), zscores(&sum));
    let mut best = 0;
    for k in 1..records.len() {
        if zd[k] + zs[k] < zd[best] + zs[best] {
            best = k;
        }
    }
    Ok(records[best].epoch)
}

pub fn write_epoch_log(path: &Path, meta: Option<&ArtifactMeta>, records: &[EpochRecord]) -> Result<()> {
    let mut body = String::from("epoch,TRAIN_MSE,DEV_MSE,TRAIN_MAE,DEV_MAE\n");
    for r in records {
        body.push_str(&format!(
            "{},{}\n",
            r.epoch,
            io::join_f64(&[r.train_mse, r.dev_mse, r.train_mae, r.dev_mae])
        ));
    }
    io::write_text(path, meta, &body)
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = io::read_text(path)?;
    let mut rdr = io::csv_reader(&text, true);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 5 {
            return Err(Error::LengthMismatch {
                expected: 5,
                got: rec.len(),
            });
        }
        let epoch = rec[0].parse().map_err(|_| Error::Parse {
            line,
            column: 1,
            message: format!("bad epoch {:?}", &rec[0]),
        })?;
        let v = |j: usize| io::parse_f64(&rec[j], line, j + 1);
        out.push(EpochRecord {
            epoch,
            train_mse: v(1)?,
            dev_mse: v(2)?,
            train_mae: v(3)?,
            dev_mae: v(4)?,
        });
    }
    Ok(out)
}
