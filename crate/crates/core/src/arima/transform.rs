//! Partial-autocorrelation parameterization of lag polynomials
//! `1 - a_1 z - ... - a_k z^k`. Any vector of partial autocorrelations in
//! (-1, 1) maps to a polynomial with all roots outside the unit circle.

/// Partial autocorrelations are kept this far from the boundary.
pub const PACF_BOUND: f64 = 1.0 - 1e-5;

/// Durbin-Levinson: partial autocorrelations to polynomial coefficients.
pub fn pacf_to_coeffs(pacf: &[f64]) -> Vec<f64> {
    let mut coeffs: Vec<f64> = Vec::with_capacity(pacf.len());
    for (k, &r) in pacf.iter().enumerate() {
        let prev = coeffs.clone();
        for j in 0..k {
            coeffs[j] = prev[j] - r * prev[k - 1 - j];
        }
        coeffs.push(r);
    }
    coeffs
}

/// Inverse of [`pacf_to_coeffs`]; `None` if the polynomial has a root on or
/// inside the unit circle.
pub fn coeffs_to_pacf(coeffs: &[f64]) -> Option<Vec<f64>> {
    let mut cur = coeffs.to_vec();
    let mut pacf = vec![0.0; coeffs.len()];
    for k in (0..coeffs.len()).rev() {
        let r = cur[k];
        if !r.is_finite() || r.abs() >= 1.0 {
            return None;
        }
        pacf[k] = r;
        let denom = 1.0 - r * r;
        let prev: Vec<f64> = (0..k).map(|j| (cur[j] + r * cur[k - 1 - j]) / denom).collect();
        cur = prev;
    }
    Some(pacf)
}

/// True when `1 - sum a_k z^k` has every root strictly outside the unit circle.
pub fn is_stable(coeffs: &[f64]) -> bool {
    coeffs_to_pacf(coeffs).is_some()
}

/// Unconstrained real to a partial autocorrelation.
pub fn squash(u: f64) -> f64 {
    u.tanh().clamp(-PACF_BOUND, PACF_BOUND)
}

pub fn unsquash(r: f64) -> f64 {
    r.clamp(-PACF_BOUND, PACF_BOUND).atanh()
}

pub fn coeffs_from_unconstrained(u: &[f64]) -> Vec<f64> {
    let pacf: Vec<f64> = u.iter().map(|&v| squash(v)).collect();
    pacf_to_coeffs(&pacf)
}

/// Maps stable coefficients back to unconstrained space, shrinking an
/// unstable input toward zero until it becomes stable.
pub fn unconstrained_from_coeffs(coeffs: &[f64]) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    for _ in 0..60 {
        if let Some(p) = coeffs_to_pacf(&c) {
            return p.into_iter().map(unsquash).collect();
        }
        c.iter_mut().for_each(|v| *v *= 0.9);
    }
    vec![0.0; coeffs.len()]
}
