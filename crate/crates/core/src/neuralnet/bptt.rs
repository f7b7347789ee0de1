//! Batched forward pass and exact gradients through the unrolled sequence.
//!
//! The four gate matrices are stacked row-wise into one `4H x (H+I)` matrix
//! so each step costs a single matrix product; gate order is f, i, C, o.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::train::Regularization;
use super::{sigmoid, Model, ParamKind};
use crate::error::{Error, Result};

/// Gradients share the parameter layout.
pub type Gradients = Model;

/// Multiplier applied to the last hidden state before the dense layer.
#[derive(Debug, Clone, Copy)]
pub(crate) enum HiddenScale<'a> {
    None,
    Scalar(f64),
    Mask(&'a Array2<f64>),
}

struct Step {
    v: Array2<f64>,
    /// Activated gates, `B x 4H`.
    gates: Array2<f64>,
    c_prev: Array2<f64>,
    tanh_c: Array2<f64>,
}

pub(crate) struct Trace {
    steps: Vec<Step>,
    h_dense: Array2<f64>,
    pub(crate) yhat: Array1<f64>,
}

fn stacked(model: &Model) -> (Array2<f64>, Array1<f64>) {
    let l = &model.lstm;
    let w = concatenate(Axis(0), &[l.w_f.view(), l.w_i.view(), l.w_c.view(), l.w_o.view()]).expect("gate shapes agree");
    let b = concatenate(Axis(0), &[l.b_f.view(), l.b_i.view(), l.b_c.view(), l.b_o.view()]).expect("bias shapes agree");
    (w, b)
}

fn check_input(model: &Model, x: &ArrayView2<f64>) -> Result<usize> {
    model.validate()?;
    let n_in = model.input_size();
    if x.ncols() == 0 || !x.ncols().is_multiple_of(n_in) {
        return Err(Error::DimensionMismatch(format!(
            "rows of {} values for {n_in} inputs per step",
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(x.ncols() / n_in)
}

pub(crate) fn run(model: &Model, x: ArrayView2<f64>, scale: HiddenScale<'_>, keep_trace: bool) -> Result<Trace> {
    let seq = check_input(model, &x)?;
    let (hs, is) = (model.hidden_size(), model.input_size());
    let b = x.nrows();
    let (w, bias) = stacked(model);
    let wt = w.t();
    let mut h = Array2::<f64>::zeros((b, hs));
    let mut c = Array2::<f64>::zeros((b, hs));
    let mut steps = Vec::with_capacity(if keep_trace { seq } else { 0 });
    for t in 0..seq {
        let mut v = Array2::<f64>::zeros((b, hs + is));
        v.slice_mut(s![.., ..hs]).assign(&h);
        v.slice_mut(s![.., hs..]).assign(&x.slice(s![.., t * is..(t + 1) * is]));
        let mut gates = v.dot(&wt);
        let mut c_next = Array2::<f64>::zeros((b, hs));
        let mut tanh_c = Array2::<f64>::zeros((b, hs));
        for r in 0..b {
            let z = gates.row_mut(r).into_slice().expect("row-major");
            for (k, zk) in z.iter_mut().enumerate() {
                let pre = *zk + bias[k];
                *zk = if (2 * hs..3 * hs).contains(&k) { pre.tanh() } else { sigmoid(pre) };
            }
            for k in 0..hs {
                let (f, i, g, o) = (z[k], z[hs + k], z[2 * hs + k], z[3 * hs + k]);
                let cn = f * c[(r, k)] + i * g;
                let tc = cn.tanh();
                c_next[(r, k)] = cn;
                tanh_c[(r, k)] = tc;
                h[(r, k)] = o * tc;
            }
        }
        let c_prev = std::mem::replace(&mut c, c_next);
        if keep_trace {
            steps.push(Step {
                v,
                gates,
                c_prev,
                tanh_c,
            });
        }
    }
    let h_dense = match scale {
        HiddenScale::None => h,
        HiddenScale::Scalar(a) => h * a,
        HiddenScale::Mask(m) => {
            if m.dim() != h.dim() {
                return Err(Error::DimensionMismatch(format!("dropout mask {:?} for hidden {:?}", m.dim(), h.dim())));
            }
            h * m
        }
    };
    let yhat = (h_dense.dot(&model.dense.w) + model.dense.b).mapv(super::double_tanh);
    Ok(Trace { steps, h_dense, yhat })
}

/// Predictions for a batch of sequences (rows of `x`), no dropout.
pub fn forward_batch(model: &Model, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    Ok(run(model, x, HiddenScale::None, false)?.yhat)
}

/// Inference with the test-time hidden-state scaling implied by `dropout`.
pub fn predict(model: &Model, x: ArrayView2<f64>, hidden_scale: f64) -> Result<Array1<f64>> {
    let scale = if hidden_scale == 1.0 {
        HiddenScale::None
    } else {
        HiddenScale::Scalar(hidden_scale)
    };
    Ok(run(model, x, scale, false)?.yhat)
}

fn penalty(model: &Model, reg: &Regularization) -> f64 {
    if reg.lambda_w == 0.0 && reg.lambda_b == 0.0 {
        return 0.0;
    }
    model
        .tensors()
        .into_iter()
        .map(|(kind, t)| {
            let lambda = match kind {
                ParamKind::Weight => reg.lambda_w,
                ParamKind::Bias => reg.lambda_b,
            };
            lambda * t.iter().map(|v| reg.norm(*v)).sum::<f64>()
        })
        .sum()
}

fn mse(yhat: &Array1<f64>, y: ArrayView1<f64>) -> f64 {
    yhat.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Mean squared error plus the regularisation penalty.
pub fn batch_loss(
    model: &Model,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    reg: &Regularization,
    mask: Option<&Array2<f64>>,
) -> Result<f64> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let scale = mask.map_or(HiddenScale::None, HiddenScale::Mask);
    let trace = run(model, x, scale, false)?;
    Ok(mse(&trace.yhat, y) + penalty(model, reg))
}

/// Loss and its gradient with respect to every parameter. `mask` multiplies
/// the last hidden state (training-time dropout).
pub fn backward(
    model: &Model,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    reg: &Regularization,
    mask: Option<&Array2<f64>>,
) -> Result<(f64, Gradients)> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let scale = mask.map_or(HiddenScale::None, HiddenScale::Mask);
    let trace = run(model, x, scale, true)?;
    let (hs, is) = (model.hidden_size(), model.input_size());
    let b = x.nrows();
    let n = b as f64;

    let loss = mse(&trace.yhat, y) + penalty(model, reg);
    let dpre: Array1<f64> = trace
        .yhat
        .iter()
        .zip(y)
        .map(|(yh, yt)| 2.0 * (yh - yt) / n * (2.0 - yh * yh / 2.0))
        .collect();

    let mut grads = Model::zeros(hs, is);
    grads.dense.w = trace.h_dense.t().dot(&dpre);
    grads.dense.b = dpre.sum();

    let mut dh = Array2::<f64>::zeros((b, hs));
    for r in 0..b {
        for k in 0..hs {
            dh[(r, k)] = dpre[r] * model.dense.w[k];
        }
    }
    if let Some(m) = mask {
        dh *= m;
    }

    let (w, _) = stacked(model);
    let mut dw = Array2::<f64>::zeros((4 * hs, hs + is));
    let mut db = Array1::<f64>::zeros(4 * hs);
    let mut dc = Array2::<f64>::zeros((b, hs));
    let mut dz = Array2::<f64>::zeros((b, 4 * hs));
    for step in trace.steps.iter().rev() {
        for r in 0..b {
            let g = step.gates.row(r);
            let g = g.as_slice().expect("row-major");
            for k in 0..hs {
                let (f, i, cand, o) = (g[k], g[hs + k], g[2 * hs + k], g[3 * hs + k]);
                let tc = step.tanh_c[(r, k)];
                let dh_rk = dh[(r, k)];
                let dct = dc[(r, k)] + dh_rk * o * (1.0 - tc * tc);
                dz[(r, k)] = dct * step.c_prev[(r, k)] * f * (1.0 - f);
                dz[(r, hs + k)] = dct * cand * i * (1.0 - i);
                dz[(r, 2 * hs + k)] = dct * i * (1.0 - cand * cand);
                dz[(r, 3 * hs + k)] = dh_rk * tc * o * (1.0 - o);
                dc[(r, k)] = dct * f;
            }
        }
        dw += &dz.t().dot(&step.v);
        db += &dz.sum_axis(Axis(0));
        let dv = dz.dot(&w);
        dh.assign(&dv.slice(s![.., ..hs]));
    }

    let block = |a: usize| s![a * hs..(a + 1) * hs, ..];
    grads.lstm.w_f.assign(&dw.slice(block(0)));
    grads.lstm.w_i.assign(&dw.slice(block(1)));
    grads.lstm.w_c.assign(&dw.slice(block(2)));
    grads.lstm.w_o.assign(&dw.slice(block(3)));
    grads.lstm.b_f.assign(&db.slice(s![..hs]));
    grads.lstm.b_i.assign(&db.slice(s![hs..2 * hs]));
    grads.lstm.b_c.assign(&db.slice(s![2 * hs..3 * hs]));
    grads.lstm.b_o.assign(&db.slice(s![3 * hs..]));

    if reg.lambda_w != 0.0 || reg.lambda_b != 0.0 {
        for ((kind, g), (_, p)) in grads.tensors_mut().into_iter().zip(model.tensors()) {
            let lambda = match kind {
                ParamKind::Weight => reg.lambda_w,
                ParamKind::Bias => reg.lambda_b,
            };
            for (gv, pv) in g.iter_mut().zip(p) {
                *gv += lambda * reg.norm_derivative(*pv);
            }
        }
    }
    Ok((loss, grads))
}
