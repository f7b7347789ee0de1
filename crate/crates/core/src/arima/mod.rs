//! ARIMA(p, d, q) fitting by exact maximum likelihood, least-AIC order
//! selection, and one-step in-sample residuals for the hybrid model.
//!
//! Sign convention for the ARMA part of the differenced series `w`:
//!
//! ```text
//! w_t = c + sum_k phi_k w_{t-k} + e_t - sum_l theta_l e_{t-l}
//! ```

mod acf;
pub mod optimize;
pub mod statespace;
pub mod transform;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use optimize::{nelder_mead, NelderMeadOptions};

pub use acf::{acf, pacf};

/// Innovation variance used when the maximum-likelihood estimate collapses to zero.
pub const SIGMA2_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize, usize)", into = "(usize, usize, usize)")]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }

    /// The five candidate orders tried for every series.
    pub const CANDIDATES: [ArimaOrder; 5] = [
        ArimaOrder::new(1, 1, 0),
        ArimaOrder::new(0, 1, 1),
        ArimaOrder::new(1, 1, 1),
        ArimaOrder::new(2, 1, 1),
        ArimaOrder::new(2, 1, 0),
    ];

    /// Free parameters counted by AIC: ARMA coefficients, the constant when
    /// estimated, and the innovation variance.
    pub fn parameter_count(&self, include_constant: bool) -> usize {
        self.p + self.q + usize::from(include_constant) + 1
    }
}

impl From<(usize, usize, usize)> for ArimaOrder {
    fn from((p, d, q): (usize, usize, usize)) -> Self {
        Self { p, d, q }
    }
}

impl From<ArimaOrder> for (usize, usize, usize) {
    fn from(o: ArimaOrder) -> Self {
        (o.p, o.d, o.q)
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub order: ArimaOrder,
    pub c: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    /// Whether `c` was a free parameter.
    pub include_constant: bool,
    /// Innovation variance hit [`SIGMA2_FLOOR`].
    pub degenerate: bool,
}

impl ArimaFit {
    /// Unconditional mean of the differenced series, `c / (1 - sum phi)`.
    pub fn mean(&self) -> f64 {
        self.c / (1.0 - self.phi.iter().sum::<f64>())
    }

    pub fn parameter_count(&self) -> usize {
        self.order.parameter_count(self.include_constant)
    }

    /// A fit with the given coefficients; `loglik`/`aic` are left at NaN.
    pub fn with_params(order: ArimaOrder, c: f64, phi: Vec<f64>, theta: Vec<f64>, sigma2: f64) -> Self {
        Self {
            order,
            c,
            phi,
            theta,
            sigma2,
            loglik: f64::NAN,
            aic: f64::NAN,
            include_constant: true,
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub include_constant: bool,
    pub max_iter: usize,
    pub f_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            include_constant: true,
            max_iter: 500,
            f_tol: 1e-8,
        }
    }
}

/// d-th order differencing, `d <= 2`.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>> {
    if d > 2 {
        return Err(Error::InvalidArgument(format!("differencing level {d} > 2")));
    }
    if series.len() <= d {
        return Err(Error::SeriesTooShort {
            needed: d + 1,
            got: series.len(),
        });
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

pub fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

fn check_region(phi: &[f64], theta: &[f64]) -> Result<()> {
    if transform::is_stable(phi) && transform::is_stable(theta) {
        Ok(())
    } else {
        Err(Error::NonStationary)
    }
}

/// Exact Gaussian log-likelihood of `fit` on `series` (differenced by the
/// fit's `d` before evaluation).
pub fn loglikelihood(series: &[f64], fit: &ArimaFit) -> Result<f64> {
    check_region(&fit.phi, &fit.theta)?;
    let w = difference(series, fit.order.d)?;
    let needed = fit.phi.len() + fit.theta.len() + 1;
    if w.len() < needed {
        return Err(Error::SeriesTooShort { needed, got: w.len() });
    }
    let mu = fit.mean();
    let y: Vec<f64> = w.iter().map(|v| v - mu).collect();
    let out = statespace::filter(&y, &fit.phi, &fit.theta).ok_or(Error::NonStationary)?;
    Ok(out.loglik(fit.sigma2))
}

struct Layout {
    constant: bool,
    p: usize,
    q: usize,
}

impl Layout {
    fn unpack(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let off = usize::from(self.constant);
        let mu = if self.constant { x[0] } else { 0.0 };
        let phi = transform::coeffs_from_unconstrained(&x[off..off + self.p]);
        let theta = transform::coeffs_from_unconstrained(&x[off + self.p..off + self.p + self.q]);
        (mu, phi, theta)
    }
}

/// Conditional sum of squares with pre-sample innovations set to zero.
fn css_objective(w: &[f64], mu: f64, phi: &[f64], theta: &[f64]) -> f64 {
    let p = phi.len();
    let mut e = vec![0.0; w.len()];
    let mut ss = 0.0;
    for t in p..w.len() {
        let mut pred = 0.0;
        for (k, c) in phi.iter().enumerate() {
            pred += c * (w[t - k - 1] - mu);
        }
        for (l, c) in theta.iter().enumerate() {
            if t > l {
                pred -= c * e[t - l - 1];
            }
        }
        e[t] = w[t] - mu - pred;
        ss += e[t] * e[t];
    }
    let m = (w.len() - p).max(1) as f64;
    0.5 * m * (ss / m).max(SIGMA2_FLOOR).ln()
}

fn exact_objective(w: &[f64], mu: f64, phi: &[f64], theta: &[f64]) -> f64 {
    let y: Vec<f64> = w.iter().map(|v| v - mu).collect();
    match statespace::filter(&y, phi, theta) {
        Some(out) => -out.loglik(out.sigma2_hat().max(SIGMA2_FLOOR)),
        None => f64::INFINITY,
    }
}

/// Maximum-likelihood ARIMA fit. The innovation variance is concentrated
/// out; the remaining parameters are searched by Nelder-Mead in a space
/// that keeps the AR part stationary and the MA part invertible. A
/// conditional-sum-of-squares pass seeds the exact search.
pub fn fit_arma_mle(series: &[f64], order: ArimaOrder) -> Result<ArimaFit> {
    fit_arma_mle_with(series, order, &FitOptions::default())
}

pub fn fit_arma_mle_with(series: &[f64], order: ArimaOrder, opts: &FitOptions) -> Result<ArimaFit> {
    let w = difference(series, order.d)?;
    let needed = order.p + order.q + 3;
    if w.len() < needed {
        return Err(Error::SeriesTooShort { needed, got: w.len() });
    }
    let fail = |reason: String| Error::FitFailed { order, reason };
    let layout = Layout {
        constant: opts.include_constant,
        p: order.p,
        q: order.q,
    };

    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();

    let mut x0 = Vec::with_capacity(order.p + order.q + 1);
    let mut step = Vec::with_capacity(x0.capacity());
    if layout.constant {
        x0.push(mean);
        step.push(if sd > 0.0 { 0.1 * sd } else { 1e-3 });
    }
    // Yule-Walker partial autocorrelations seed the AR part.
    let yw = if var > 0.0 && order.p > 0 && w.len() > order.p + 1 {
        pacf(&w, order.p).map(|v| v[1..].to_vec()).unwrap_or_else(|_| vec![0.0; order.p])
    } else {
        vec![0.0; order.p]
    };
    x0.extend(yw.iter().map(|&r| transform::unsquash(r)));
    x0.extend(std::iter::repeat_n(0.0, order.q));
    step.extend(std::iter::repeat_n(0.3, order.p + order.q));

    let css = nelder_mead(
        |x| {
            let (mu, phi, theta) = layout.unpack(x);
            css_objective(&w, mu, &phi, &theta)
        },
        &x0,
        &step,
        NelderMeadOptions {
            max_iter: 200,
            f_tol: opts.f_tol,
        },
    );
    let start = if css.f.is_finite() { css.x } else { x0 };

    let nm = NelderMeadOptions {
        max_iter: opts.max_iter,
        f_tol: opts.f_tol,
    };
    let objective = |x: &[f64]| {
        let (mu, phi, theta) = layout.unpack(x);
        exact_objective(&w, mu, &phi, &theta)
    };
    let first = nelder_mead(objective, &start, &step, nm);
    if !first.converged {
        return Err(fail(format!("no convergence after {} iterations", first.iterations)));
    }
    if !first.f.is_finite() {
        return Err(fail("likelihood is not finite".into()));
    }
    // A restart guards against simplex collapse on a ridge.
    let restart = nelder_mead(objective, &first.x, &step, nm);
    let best = if restart.f < first.f { restart } else { first };

    let (mu, phi, theta) = layout.unpack(&best.x);
    let y: Vec<f64> = w.iter().map(|v| v - mu).collect();
    let out = statespace::filter(&y, &phi, &theta).ok_or_else(|| fail("filter failed at optimum".into()))?;
    let s2 = out.sigma2_hat();
    let degenerate = s2 < SIGMA2_FLOOR;
    let sigma2 = s2.max(SIGMA2_FLOOR);
    let loglik = out.loglik(sigma2);
    let c = mu * (1.0 - phi.iter().sum::<f64>());
    let k = order.parameter_count(layout.constant);
    Ok(ArimaFit {
        order,
        c,
        phi,
        theta,
        sigma2,
        loglik,
        aic: aic(loglik, k),
        include_constant: layout.constant,
        degenerate,
    })
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub fit: ArimaFit,
    /// Candidates whose fit failed, with the reason.
    pub failures: Vec<(ArimaOrder, String)>,
}

const AIC_TIE: f64 = 1e-9;

/// Least-AIC fit over `candidates`; ties go to fewer parameters, then to the
/// earlier candidate.
pub fn select_best_order(series: &[f64], candidates: &[ArimaOrder]) -> Result<ArimaFit> {
    select_best_order_with(series, candidates, &FitOptions::default()).map(|s| s.fit)
}

pub fn select_best_order_with(series: &[f64], candidates: &[ArimaOrder], opts: &FitOptions) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate orders".into()));
    }
    let mut best: Option<ArimaFit> = None;
    let mut failures = Vec::new();
    for &order in candidates {
        match fit_arma_mle_with(series, order, opts) {
            Ok(fit) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        fit.aic < b.aic - AIC_TIE
                            || ((fit.aic - b.aic).abs() <= AIC_TIE && fit.parameter_count() < b.parameter_count())
                    }
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => failures.push((order, e.to_string())),
        }
    }
    best.map(|fit| Selection { fit, failures }).ok_or(Error::NoFit)
}

/// One-step-ahead fitted values on the original (undifferenced) scale. The
/// first `d` values have no prior difference and are predicted as themselves.
pub fn in_sample_predict(fit: &ArimaFit, series: &[f64]) -> Result<Vec<f64>> {
    let d = fit.order.d;
    if series.len() <= d {
        return Err(Error::LengthMismatch {
            expected: d + 1,
            got: series.len(),
        });
    }
    let w = difference(series, d)?;
    let mu = fit.mean();
    let y: Vec<f64> = w.iter().map(|v| v - mu).collect();
    let out = statespace::filter(&y, &fit.phi, &fit.theta).ok_or(Error::NonStationary)?;
    let mut fitted = series[..d].to_vec();
    for t in d..series.len() {
        let w_hat = mu + out.predictions[t - d];
        let carried = match d {
            0 => 0.0,
            1 => series[t - 1],
            _ => 2.0 * series[t - 1] - series[t - 2],
        };
        fitted.push(w_hat + carried);
    }
    Ok(fitted)
}

/// `series - in_sample_predict(fit, series)`.
pub fn residuals(fit: &ArimaFit, series: &[f64]) -> Result<Vec<f64>> {
    let fitted = in_sample_predict(fit, series)?;
    Ok(series.iter().zip(&fitted).map(|(x, f)| x - f).collect())
}

/// Identifies a supervised row: the series pair, its offset and the slice role.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeriesId {
    pub first: String,
    pub second: String,
    pub offset: usize,
    pub role: crate::corrgen::SliceRole,
}

pub const INPUT_STEPS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedResidual {
    pub id: SeriesId,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Splits a 21-step residual sequence into its first 20 values and the last.
pub fn extract_xy(residuals: &[f64]) -> Result<(Vec<f64>, f64)> {
    if residuals.len() != INPUT_STEPS + 1 {
        return Err(Error::LengthMismatch {
            expected: INPUT_STEPS + 1,
            got: residuals.len(),
        });
    }
    Ok((residuals[..INPUT_STEPS].to_vec(), residuals[INPUT_STEPS]))
}

impl SupervisedResidual {
    pub fn from_residuals(id: SeriesId, residuals: &[f64]) -> Result<Self> {
        let (x, y) = extract_xy(residuals)?;
        Ok(Self { id, x, y })
    }
}
