use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};

/// First and second moment estimates over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected ADAM step; advances `state.t` before use, so the
/// first call runs with `t = 1`.
pub fn adam_update(
    params: &mut Model,
    grads: &Model,
    state: &mut AdamState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    let n = params.parameter_count();
    if grads.parameter_count() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::DimensionMismatch("ADAM state does not match the parameter count".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let mut at = 0;
    for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (pv, gv) in p.iter_mut().zip(g) {
            let m = &mut state.m[at];
            let v = &mut state.v[at];
            *m = beta1 * *m + (1.0 - beta1) * gv;
            *v = beta2 * *v + (1.0 - beta2) * gv * gv;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *pv -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            at += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(value: f64) -> Model {
        let mut m = Model::zeros(2, 1);
        for (_, t) in m.tensors_mut() {
            t.fill(value);
        }
        m
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = filled(0.3);
        let mut s = AdamState::new(p.parameter_count());
        adam_update(&mut p, &filled(0.0), &mut s, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p, filled(0.3));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.5, -2.0, 1e-3] {
            let mut p = filled(0.0);
            let mut s = AdamState::new(p.parameter_count());
            adam_update(&mut p, &filled(g), &mut s, 1e-3, 0.9, 0.999, 1e-8).unwrap();
            // m_hat = g, v_hat = g^2
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!(p.to_flat().iter().all(|v| (v - expected).abs() < 1e-15));
            assert_eq!(s.t, 1);
        }
    }

    #[test]
    fn deterministic_given_state() {
        let g = filled(0.7);
        let mut s = AdamState::new(g.parameter_count());
        let mut p = filled(0.1);
        adam_update(&mut p, &g, &mut s, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        let (mut p1, mut s1) = (p.clone(), s.clone());
        let (mut p2, mut s2) = (p.clone(), s.clone());
        adam_update(&mut p1, &g, &mut s1, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        adam_update(&mut p2, &g, &mut s2, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn mismatched_state() {
        let mut p = filled(0.0);
        let mut s = AdamState::new(3);
        assert!(adam_update(&mut p, &filled(1.0), &mut s, 1e-3, 0.9, 0.999, 1e-8).is_err());
    }
}
