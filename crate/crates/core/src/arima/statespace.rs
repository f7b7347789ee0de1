//! Exact Gaussian likelihood of a zero-mean ARMA(p, q) process through the
//! Kalman filter on its Harvey state-space form.
//!
//! The process is `y_t = sum phi_k y_{t-k} + e_t - sum theta_l e_{t-l}`; the
//! state has dimension `r = max(p, q + 1)`, transition `T` carrying the AR
//! coefficients in its first column and an identity superdiagonal, and
//! disturbance loading `R = [1, -theta_1, ..., -theta_{r-1}]`. The filter is
//! initialised at the stationary distribution, `P = T P T' + R R'`.

use nalgebra::{DMatrix, DVector};

/// Filter output with the innovation variance scaled out (`sigma2 = 1`).
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// One-step prediction errors `v_t = y_t - E[y_t | y_1..y_{t-1}]`.
    pub innovations: Vec<f64>,
    /// Prediction-error variances divided by `sigma2`.
    pub variances: Vec<f64>,
    /// One-step predictions `E[y_t | y_1..y_{t-1}]`.
    pub predictions: Vec<f64>,
}

impl FilterOutput {
    /// Maximum-likelihood innovation variance given the coefficients.
    pub fn sigma2_hat(&self) -> f64 {
        let n = self.innovations.len() as f64;
        self.innovations
            .iter()
            .zip(&self.variances)
            .map(|(v, f)| v * v / f)
            .sum::<f64>()
            / n
    }

    /// Gaussian log-likelihood at innovation variance `sigma2`.
    pub fn loglik(&self, sigma2: f64) -> f64 {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        -0.5 * self
            .innovations
            .iter()
            .zip(&self.variances)
            .map(|(v, f)| ln2pi + (sigma2 * f).ln() + v * v / (sigma2 * f))
            .sum::<f64>()
    }

    pub fn sum_log_variances(&self) -> f64 {
        self.variances.iter().map(|f| f.ln()).sum()
    }
}

fn state_dim(p: usize, q: usize) -> usize {
    p.max(q + 1)
}

/// Stationary state covariance for unit innovation variance, solving the
/// discrete Lyapunov equation as a linear system in `vec(P)`.
pub fn stationary_covariance(phi: &[f64], theta: &[f64]) -> Option<DMatrix<f64>> {
    let r = state_dim(phi.len(), theta.len());
    let t = transition(phi, r);
    let rv = loading(theta, r);
    let rr = &rv * rv.transpose();
    let kron = t.kronecker(&t);
    let lhs = DMatrix::<f64>::identity(r * r, r * r) - kron;
    // column-major vec
    let rhs = DVector::from_column_slice(rr.as_slice());
    let sol = lhs.lu().solve(&rhs)?;
    let p = DMatrix::from_column_slice(r, r, sol.as_slice());
    // symmetrize against round-off
    Some((&p + p.transpose()) * 0.5)
}

fn transition(phi: &[f64], r: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(r, r);
    for (i, &c) in phi.iter().enumerate() {
        t[(i, 0)] = c;
    }
    for i in 0..r.saturating_sub(1) {
        t[(i, i + 1)] = 1.0;
    }
    t
}

fn loading(theta: &[f64], r: usize) -> DVector<f64> {
    let mut v = DVector::zeros(r);
    v[0] = 1.0;
    for (i, &c) in theta.iter().enumerate() {
        v[i + 1] = -c;
    }
    v
}

/// Runs the filter over the zero-mean series `y`. Returns `None` if the
/// stationary covariance cannot be solved (unit-root AR polynomial).
pub fn filter(y: &[f64], phi: &[f64], theta: &[f64]) -> Option<FilterOutput> {
    let r = state_dim(phi.len(), theta.len());
    let p0 = stationary_covariance(phi, theta)?;
    let mut tm = vec![0.0; r];
    tm[..phi.len()].copy_from_slice(phi);
    let mut rv = vec![0.0; r];
    rv[0] = 1.0;
    for (i, &c) in theta.iter().enumerate() {
        rv[i + 1] = -c;
    }

    // row-major dense state covariance
    let mut p = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..r {
            p[i * r + j] = p0[(i, j)];
        }
    }
    let mut a = vec![0.0; r];
    let mut innovations = Vec::with_capacity(y.len());
    let mut variances = Vec::with_capacity(y.len());
    let mut predictions = Vec::with_capacity(y.len());
    let mut tp = vec![0.0; r * r];

    for &obs in y {
        let v = obs - a[0];
        let f = p[0];
        if !(f.is_finite() && f > 0.0) {
            return None;
        }
        innovations.push(v);
        variances.push(f);
        predictions.push(a[0]);

        // update: a += P[:,0] v / f ; P -= P[:,0] P[0,:] / f
        let k: Vec<f64> = (0..r).map(|i| p[i * r] / f).collect();
        for i in 0..r {
            a[i] += k[i] * v;
        }
        let row0: Vec<f64> = p[..r].to_vec();
        for i in 0..r {
            for j in 0..r {
                p[i * r + j] -= k[i] * row0[j];
            }
        }

        // predict: a = T a ; P = T P T' + R R'
        let a0 = a[0];
        let mut next = vec![0.0; r];
        for i in 0..r {
            next[i] = tm[i] * a0 + if i + 1 < r { a[i + 1] } else { 0.0 };
        }
        a = next;
        // (T P)[i][j] = tm[i] * P[0][j] + P[i+1][j]
        for i in 0..r {
            for j in 0..r {
                let below = if i + 1 < r { p[(i + 1) * r + j] } else { 0.0 };
                tp[i * r + j] = tm[i] * p[j] + below;
            }
        }
        // (T P T')[i][j] = (TP)[i][0] * tm[j] + (TP)[i][j+1]
        for i in 0..r {
            for j in 0..r {
                let right = if j + 1 < r { tp[i * r + j + 1] } else { 0.0 };
                p[i * r + j] = tp[i * r] * tm[j] + right + rv[i] * rv[j];
            }
        }
    }
    Some(FilterOutput {
        innovations,
        variances,
        predictions,
    })
}
