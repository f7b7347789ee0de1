use crate::error::{Error, Result};

/// Sample autocorrelations at lags `0..=max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag + 1 {
        return Err(Error::SeriesTooShort {
            needed: max_lag + 2,
            got: series.len(),
        });
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = dev.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|k| dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// Partial autocorrelations at lags `0..=max_lag` by the Durbin-Levinson
/// recursion on the sample autocorrelations.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(series, max_lag)?;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = rho[k] - phi.iter().enumerate().map(|(j, p)| p * rho[k - 1 - j]).sum::<f64>();
        let den = 1.0 - phi.iter().enumerate().map(|(j, p)| p * rho[j + 1]).sum::<f64>();
        let a = if den.abs() > 0.0 { num / den } else { 0.0 };
        let prev = phi.clone();
        for j in 0..phi.len() {
            phi[j] = prev[j] - a * prev[k - 2 - j];
        }
        phi.push(a);
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lag_zero_is_one() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        assert_eq!(acf(&x, 2).unwrap()[0], 1.0);
        assert_eq!(pacf(&x, 2).unwrap()[0], 1.0);
        assert!(acf(&[2.0; 5], 1).is_err());
        assert!(acf(&x, 4).is_err());
    }

    #[test]
    fn pacf_lag_one_equals_acf() {
        let x = [0.1, 0.5, -0.3, 0.8, 0.2, -0.6, 0.4];
        let a = acf(&x, 3).unwrap();
        let p = pacf(&x, 3).unwrap();
        assert!((a[1] - p[1]).abs() < 1e-15);
        // lag 2 closed form
        let expected = (a[2] - a[1] * a[1]) / (1.0 - a[1] * a[1]);
        assert!((p[2] - expected).abs() < 1e-14);
    }

    #[test]
    fn white_noise_band() {
        let mut passes = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = synth::simulate_arma(&[], &[], 0.0, 1.0, 1000, &mut rng);
            let a = acf(&x, 10).unwrap();
            let band = 3.0 / (1000f64).sqrt();
            if a[1..].iter().all(|v| v.abs() < band) {
                passes += 1;
            }
        }
        assert!(passes >= 16, "{passes}/20");
    }

    #[test]
    fn ar1_theoretical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = synth::simulate_arma(&[0.8], &[], 0.0, 1.0, 2000, &mut rng);
        let a = acf(&x, 2).unwrap();
        let p = pacf(&x, 2).unwrap();
        assert!((a[1] - 0.8).abs() < 0.1);
        assert!(p[2].abs() < 0.1);
    }
}
