//! Single-layer LSTM regressor with a dense head and `2 tanh` output,
//! trained by mini-batch ADAM with hand-written backpropagation through time.
//!
//! Gate pre-activations act on the concatenation `v_t = [h_{t-1}, x_t]`:
//!
//! ```text
//! f = sigmoid(W_f v + b_f)    i = sigmoid(W_i v + b_i)
//! g = tanh(W_C v + b_C)       o = sigmoid(W_o v + b_o)
//! C_t = f * C_{t-1} + i * g   h_t = o * tanh(C_t)
//! y   = 2 tanh(w . h_T + b)
//! ```

mod adam;
mod bptt;
mod train;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::arima::INPUT_STEPS;
use crate::error::{Error, Result};

pub use adam::{adam_update, AdamState};
pub use bptt::{backward, batch_loss, forward_batch, predict, Gradients};
pub use train::{
    converged, dropout_mask, evaluate, load_checkpoint, read_epoch_log, save_checkpoint, select_epoch, train,
    write_epoch_log, Checkpoint, CheckpointSink, Dataset, DropoutScaling, EpochRecord, RegKind, Regularization,
    TrainConfig, TrainOutcome, CHECKPOINT_VERSION,
};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

pub fn double_tanh(x: f64) -> f64 {
    2.0 * x.tanh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden_size: usize,
    pub input_size: usize,
    /// Each gate matrix is `hidden x (hidden + input)`; the first `hidden`
    /// columns act on `h_{t-1}`.
    pub w_f: Array2<f64>,
    pub w_i: Array2<f64>,
    pub w_c: Array2<f64>,
    pub w_o: Array2<f64>,
    pub b_f: Array1<f64>,
    pub b_i: Array1<f64>,
    pub b_c: Array1<f64>,
    pub b_o: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let w = Array2::zeros((hidden_size, hidden_size + input_size));
        let b = Array1::zeros(hidden_size);
        Self {
            hidden_size,
            input_size,
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shape = (self.hidden_size, self.hidden_size + self.input_size);
        for w in [&self.w_f, &self.w_i, &self.w_c, &self.w_o] {
            if w.dim() != shape {
                return Err(Error::DimensionMismatch(format!("gate matrix {:?}, expected {shape:?}", w.dim())));
            }
        }
        for b in [&self.b_f, &self.b_i, &self.b_c, &self.b_o] {
            if b.len() != self.hidden_size {
                return Err(Error::DimensionMismatch(format!(
                    "gate bias of length {}, expected {}",
                    b.len(),
                    self.hidden_size
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub w: Array1<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub lstm: LstmParams,
    pub dense: DenseParams,
}

/// Whether a parameter tensor is a weight or a bias (for regularisation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

impl Model {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        Self {
            lstm: LstmParams::zeros(hidden_size, input_size),
            dense: DenseParams {
                w: Array1::zeros(hidden_size),
                b: 0.0,
            },
        }
    }

    /// Glorot-uniform input kernels, orthogonal recurrent kernels, forget
    /// bias 1 and Glorot-uniform dense weights.
    pub fn init<R: Rng + ?Sized>(hidden_size: usize, input_size: usize, rng: &mut R) -> Self {
        let h = hidden_size;
        let mut m = Self::zeros(h, input_size);
        let limit = (6.0 / (input_size + 4 * h) as f64).sqrt();
        let inputs: Vec<f64> = (0..4 * h * input_size).map(|_| rng.random_range(-limit..limit)).collect();
        let gauss = DMatrix::from_fn(4 * h, h, |_, _| StandardNormal.sample(rng));
        let qr = gauss.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..h {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let gates = [&mut m.lstm.w_f, &mut m.lstm.w_i, &mut m.lstm.w_c, &mut m.lstm.w_o];
        for (g, w) in gates.into_iter().enumerate() {
            for row in 0..h {
                for col in 0..h {
                    w[(row, col)] = q[(g * h + row, col)];
                }
                for k in 0..input_size {
                    w[(row, h + k)] = inputs[(g * h + row) * input_size + k];
                }
            }
        }
        m.lstm.b_f.fill(1.0);
        let dl = (6.0 / (h + 1) as f64).sqrt();
        m.dense.w = Array1::from_iter((0..h).map(|_| rng.random_range(-dl..dl)));
        m
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size
    }

    pub fn input_size(&self) -> usize {
        self.lstm.input_size
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        if self.dense.w.len() != self.lstm.hidden_size {
            return Err(Error::DimensionMismatch(format!(
                "dense layer has {} weights for {} hidden units",
                self.dense.w.len(),
                self.lstm.hidden_size
            )));
        }
        Ok(())
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn tensors(&self) -> Vec<(ParamKind, &[f64])> {
        let l = &self.lstm;
        fn s(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        fn v(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        vec![
            (ParamKind::Weight, s(&l.w_f)),
            (ParamKind::Weight, s(&l.w_i)),
            (ParamKind::Weight, s(&l.w_c)),
            (ParamKind::Weight, s(&l.w_o)),
            (ParamKind::Bias, v(&l.b_f)),
            (ParamKind::Bias, v(&l.b_i)),
            (ParamKind::Bias, v(&l.b_c)),
            (ParamKind::Bias, v(&l.b_o)),
            (ParamKind::Weight, v(&self.dense.w)),
            (ParamKind::Bias, std::slice::from_ref(&self.dense.b)),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        let Model { lstm, dense } = self;
        vec![
            (ParamKind::Weight, lstm.w_f.as_slice_mut().expect("standard layout")),
            (ParamKind::Weight, lstm.w_i.as_slice_mut().expect("standard layout")),
            (ParamKind::Weight, lstm.w_c.as_slice_mut().expect("standard layout")),
            (ParamKind::Weight, lstm.w_o.as_slice_mut().expect("standard layout")),
            (ParamKind::Bias, lstm.b_f.as_slice_mut().expect("standard layout")),
            (ParamKind::Bias, lstm.b_i.as_slice_mut().expect("standard layout")),
            (ParamKind::Bias, lstm.b_c.as_slice_mut().expect("standard layout")),
            (ParamKind::Bias, lstm.b_o.as_slice_mut().expect("standard layout")),
            (ParamKind::Weight, dense.w.as_slice_mut().expect("standard layout")),
            (ParamKind::Bias, std::slice::from_mut(&mut dense.b)),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::LengthMismatch {
                expected: self.parameter_count(),
                got: flat.len(),
            });
        }
        let mut at = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// One cell step for a single sample.
pub fn lstm_cell_step(x_t: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = params.hidden_size;
    if x_t.len() != params.input_size || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::DimensionMismatch(format!(
            "cell step with input {}, hidden {}, cell {} for a {h}-unit, {}-input cell",
            x_t.len(),
            h_prev.len(),
            c_prev.len(),
            params.input_size
        )));
    }
    let v: Vec<f64> = h_prev.iter().chain(x_t).copied().collect();
    let v = ArrayView1::from(&v);
    let zf = params.w_f.dot(&v) + &params.b_f;
    let zi = params.w_i.dot(&v) + &params.b_i;
    let zc = params.w_c.dot(&v) + &params.b_c;
    let zo = params.w_o.dot(&v) + &params.b_o;
    let mut h_t = Vec::with_capacity(h);
    let mut c_t = Vec::with_capacity(h);
    for k in 0..h {
        let c = sigmoid(zf[k]) * c_prev[k] + sigmoid(zi[k]) * zc[k].tanh();
        c_t.push(c);
        h_t.push(sigmoid(zo[k]) * c.tanh());
    }
    Ok((h_t, c_t))
}

/// Runs a sequence of any length through the network from a zero state;
/// `x` holds `input_size` values per step.
pub fn forward_sequence(x: &[f64], model: &Model) -> Result<f64> {
    let n_in = model.input_size();
    if x.is_empty() || !x.len().is_multiple_of(n_in) {
        return Err(Error::DimensionMismatch(format!(
            "sequence of {} values for {n_in} inputs per step",
            x.len()
        )));
    }
    let mut h = vec![0.0; model.hidden_size()];
    let mut c = vec![0.0; model.hidden_size()];
    for x_t in x.chunks(n_in) {
        (h, c) = lstm_cell_step(x_t, &h, &c, &model.lstm)?;
    }
    let pre: f64 = model.dense.w.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + model.dense.b;
    Ok(double_tanh(pre))
}

/// Prediction for one 20-step residual sequence.
pub fn forward(x: &[f64], model: &Model) -> Result<f64> {
    if x.len() != INPUT_STEPS * model.input_size() {
        return Err(Error::LengthMismatch {
            expected: INPUT_STEPS * model.input_size(),
            got: x.len(),
        });
    }
    forward_sequence(x, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(h: usize, i: usize, scale: f64, seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Model::zeros(h, i);
        for (_, t) in m.tensors_mut() {
            for v in t.iter_mut() {
                *v = scale * rng.random_range(-1.0..1.0);
            }
        }
        m
    }

    #[test]
    fn activation_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(double_tanh(0.0), 0.0);
        assert!(double_tanh(20.0) > 1.999999 && double_tanh(-20.0) < -1.999999);
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(!sigmoid(-800.0).is_nan());
    }

    #[test]
    fn zero_parameter_cell() {
        let p = LstmParams::zeros(3, 1);
        let c_prev = [0.4, -1.0, 2.0];
        let (h, c) = lstm_cell_step(&[0.7], &[0.1, 0.2, 0.3], &c_prev, &p).unwrap();
        for k in 0..3 {
            assert!((c[k] - 0.5 * c_prev[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (0.5 * c_prev[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_gates_remember() {
        let mut p = LstmParams::zeros(2, 1);
        p.b_f.fill(50.0);
        p.b_i.fill(-50.0);
        let (_, c) = lstm_cell_step(&[3.0], &[0.5, -0.5], &[1.25, -0.75], &p).unwrap();
        assert!((c[0] - 1.25).abs() < 1e-12 && (c[1] + 0.75).abs() < 1e-12);
    }

    #[test]
    fn cell_matches_hand_transcription() {
        let m = random_model(2, 1, 0.8, 3);
        let p = &m.lstm;
        let (x, hp, cp) = (0.3, [0.2, -0.4], [0.5, 0.1]);
        let (h, c) = lstm_cell_step(&[x], &hp, &cp, p).unwrap();
        for k in 0..2 {
            let lin = |w: &Array2<f64>, b: &Array1<f64>| w[(k, 0)] * hp[0] + w[(k, 1)] * hp[1] + w[(k, 2)] * x + b[k];
            let f = 1.0 / (1.0 + (-lin(&p.w_f, &p.b_f)).exp());
            let i = 1.0 / (1.0 + (-lin(&p.w_i, &p.b_i)).exp());
            let g = lin(&p.w_c, &p.b_c).tanh();
            let o = 1.0 / (1.0 + (-lin(&p.w_o, &p.b_o)).exp());
            let c_k = f * cp[k] + i * g;
            assert!((c[k] - c_k).abs() < 1e-14);
            assert!((h[k] - o * c_k.tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_edge_cases() {
        let m = Model::zeros(25, 1);
        assert_eq!(forward(&[0.0; 20], &m).unwrap(), 0.0);
        assert!(forward(&[0.0; 19], &m).is_err());
        assert!(lstm_cell_step(&[0.0, 1.0], &[0.0; 25], &[0.0; 25], &m.lstm).is_err());
    }

    #[test]
    fn forward_matches_unroll() {
        let m = random_model(3, 1, 0.6, 5);
        let x: Vec<f64> = (0..20).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut h = vec![0.0; 3];
        let mut c = vec![0.0; 3];
        for t in 0..20 {
            let r = lstm_cell_step(&x[t..t + 1], &h, &c, &m.lstm).unwrap();
            h = r.0;
            c = r.1;
        }
        let pre = m.dense.w[0] * h[0] + m.dense.w[1] * h[1] + m.dense.w[2] * h[2] + m.dense.b;
        assert!((forward(&x, &m).unwrap() - 2.0 * pre.tanh()).abs() < 1e-15);
    }

    #[test]
    fn init_shapes_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Model::init(5, 1, &mut rng);
        m.validate().unwrap();
        assert!(m.lstm.b_f.iter().all(|&b| b == 1.0));
        assert!(m.lstm.b_o.iter().all(|&b| b == 0.0));
        // stacked recurrent blocks have orthonormal columns
        for a in 0..5 {
            for b in 0..5 {
                let mut dot = 0.0;
                for w in [&m.lstm.w_f, &m.lstm.w_i, &m.lstm.w_c, &m.lstm.w_o] {
                    for r in 0..5 {
                        dot += w[(r, a)] * w[(r, b)];
                    }
                }
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        let limit = (6.0f64 / 21.0).sqrt();
        for w in [&m.lstm.w_f, &m.lstm.w_i] {
            assert!(w.column(5).iter().all(|v| v.abs() <= limit));
        }
        assert_eq!(m.parameter_count(), 4 * (5 * 6 + 5) + 6);
    }

    #[test]
    fn flat_round_trip() {
        let m = random_model(3, 2, 1.0, 9);
        let mut z = Model::zeros(3, 2);
        z.set_flat(&m.to_flat()).unwrap();
        assert_eq!(z, m);
        assert!(z.set_flat(&[0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn output_strictly_bounded(seed in any::<u64>(), scale in 0.01f64..50.0, xs in prop::collection::vec(-100.0f64..100.0, 20)) {
            let m = random_model(4, 1, scale, seed);
            let y = forward(&xs, &m).unwrap();
            // 2 tanh(x) rounds to exactly +-2 once |x| > ~19
            prop_assert!(y.is_finite() && y.abs() <= 2.0);
        }
    }
}
