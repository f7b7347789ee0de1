//! Seeded synthetic data: ARMA/ARIMA simulation and factor-structured price
//! panels for fixtures and tests.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::SectorMap;
use crate::error::Result;
use crate::market_data::{PriceTable, MISSING};

const BURN_IN: usize = 200;

/// Simulates `w_t = c + sum phi_k w_{t-k} + e_t - sum theta_l e_{t-l}`,
/// `e_t ~ N(0, sigma^2)`, discarding a burn-in prefix.
pub fn simulate_arma<R: Rng + ?Sized>(phi: &[f64], theta: &[f64], c: f64, sigma: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let total = n + BURN_IN;
    let mu = c / (1.0 - phi.iter().sum::<f64>());
    let mut w = vec![mu; total];
    let mut e = vec![0.0; total];
    for t in 0..total {
        let z: f64 = StandardNormal.sample(rng);
        e[t] = sigma * z;
        let mut v = c + e[t];
        for (k, p) in phi.iter().enumerate() {
            v += p * if t > k { w[t - k - 1] } else { mu };
        }
        for (l, q) in theta.iter().enumerate() {
            if t > l {
                v -= q * e[t - l - 1];
            }
        }
        w[t] = v;
    }
    w.split_off(BURN_IN)
}

/// Simulates an ARIMA(p, d, q) series of length `n` by integrating an ARMA
/// path `d` times from zero.
pub fn simulate_arima<R: Rng + ?Sized>(
    phi: &[f64],
    theta: &[f64],
    d: usize,
    c: f64,
    sigma: f64,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut x = simulate_arma(phi, theta, c, sigma, n, rng);
    for _ in 0..d {
        let mut acc = 0.0;
        for v in x.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    x
}

/// Consecutive weekdays starting at (or after) `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthPanelConfig {
    pub n_tickers: usize,
    pub n_days: usize,
    pub n_sectors: usize,
    pub seed: u64,
    /// Days over which a factor loading stays fixed.
    pub block: usize,
    /// AR(1) persistence of each asset's market loading across blocks.
    pub loading_ar: f64,
    /// Strength of the nonlinear feedback term in the loading recursion.
    pub loading_nonlinear: f64,
    pub loading_noise: f64,
    pub market_vol: f64,
    pub sector_vol: f64,
    pub idio_vol: f64,
    /// Probability that an observation (other than the first) is blanked.
    pub missing_rate: f64,
    pub start: NaiveDate,
}

impl Default for SynthPanelConfig {
    fn default() -> Self {
        Self {
            n_tickers: 10,
            n_days: 2517,
            n_sectors: 3,
            seed: 0,
            block: 100,
            loading_ar: 0.6,
            loading_nonlinear: 0.8,
            loading_noise: 0.35,
            market_vol: 0.01,
            sector_vol: 0.006,
            idio_vol: 0.008,
            missing_rate: 0.0,
            start: NaiveDate::from_ymd_opt(2008, 1, 2).unwrap(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthPanel {
    pub prices: PriceTable,
    pub sectors: SectorMap,
}

pub fn ticker_name(i: usize) -> String {
    format!("T{i:03}")
}

/// Price panel with log-returns `beta_i(b) m_t + s_{k(i),t} + e_{i,t}`. Each
/// asset's market loading follows, block to block,
/// `beta(b) = mean + ar (beta(b-1) - mean) + nl sin(3 (beta(b-1) - mean)) + noise`,
/// so pairwise window correlations carry linear persistence with a
/// nonlinear component on top.
pub fn synth_panel(config: &SynthPanelConfig) -> Result<SynthPanel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_tickers;
    let days = config.n_days;
    let dates = business_days(config.start, days);
    let tickers: Vec<String> = (0..n).map(ticker_name).collect();
    let sectors_of: Vec<usize> = (0..n).map(|i| i % config.n_sectors.max(1)).collect();

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mean_loading: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut loading = mean_loading.clone();
    let mut log_price: Vec<f64> = (0..n).map(|_| rng.random_range(3.0..5.0)).collect();
    let mut columns = vec![Vec::with_capacity(days); n];
    let mut sector_shock = vec![0.0; config.n_sectors.max(1)];

    for t in 0..days {
        if t > 0 && t % config.block.max(1) == 0 {
            for i in 0..n {
                let dev = loading[i] - mean_loading[i];
                let z: f64 = std_normal.sample(&mut rng);
                let next = config.loading_ar * dev
                    + config.loading_nonlinear * (3.0 * dev).sin()
                    + config.loading_noise * z;
                loading[i] = mean_loading[i] + next.clamp(-2.5, 2.5);
            }
        }
        let m: f64 = config.market_vol * std_normal.sample(&mut rng);
        for s in sector_shock.iter_mut() {
            *s = config.sector_vol * std_normal.sample(&mut rng);
        }
        for i in 0..n {
            let e: f64 = config.idio_vol * std_normal.sample(&mut rng);
            log_price[i] += loading[i] * m + sector_shock[sectors_of[i]] + e;
            columns[i].push(log_price[i].exp());
        }
    }

    if config.missing_rate > 0.0 {
        for col in columns.iter_mut() {
            for v in col.iter_mut().skip(1) {
                if rng.random::<f64>() < config.missing_rate {
                    *v = MISSING;
                }
            }
        }
    }

    let sectors = SectorMap::new(
        tickers
            .iter()
            .zip(&sectors_of)
            .map(|(t, s)| (t.clone(), format!("S{s}")))
            .collect(),
    );
    Ok(SynthPanel {
        prices: PriceTable::new(dates, tickers, columns)?,
        sectors,
    })
}
