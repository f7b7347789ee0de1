//! Classical correlation predictors: full historical, constant correlation,
//! single-index (market model) and multi-group (sector blocks).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corrgen::{window_span, CorrSeries, PanelConfig, SliceRole};
use crate::error::{Error, Result};
use crate::eval::PredictionRow;
use crate::io::{self, ArtifactMeta};
use crate::market_data::{self, PriceTable};

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric correlation matrix with unit diagonal over an ordered ticker list.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl CorrMatrix {
    pub fn new(tickers: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let n = tickers.len();
        if values.dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "{n} tickers but a {:?} matrix",
                values.dim()
            )));
        }
        for i in 0..n {
            if (values[(i, i)] - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = values[(i, j)];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!("entry ({i},{j}) = {v} outside [-1,1]")));
                }
                if (v - values[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { tickers, values })
    }

    /// Builds a matrix from the strict upper triangle, row by row.
    pub fn from_upper(tickers: Vec<String>, upper: &[f64]) -> Result<Self> {
        let n = tickers.len();
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::LengthMismatch {
                expected: n * n.saturating_sub(1) / 2,
                got: upper.len(),
            });
        }
        let mut m = Array2::eye(n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::new(tickers, m)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickers.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn index_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    pub fn upper(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }
}

/// Market-model regression `R_i = alpha + beta R_m + eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub alpha: f64,
    pub beta: f64,
    /// Residual standard deviation (n - 2 degrees of freedom).
    pub sigma_eps: f64,
    /// Sample standard deviation of the asset's returns.
    pub sigma_i: f64,
}

/// Ticker to industry-sector label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SectorMap {
    map: BTreeMap<String, String>,
}

impl SectorMap {
    pub fn new(entries: Vec<(String, String)>) -> Self {
        Self {
            map: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, ticker: &str) -> Option<&str> {
        self.map.get(ticker).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = io::csv_reader(text, true);
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::LengthMismatch {
                    expected: 2,
                    got: rec.len(),
                });
            }
            entries.push((rec[0].to_string(), rec[1].to_string()));
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_text(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("ticker,sector\n");
        for (t, s) in &self.map {
            out.push_str(&format!("{t},{s}\n"));
        }
        out
    }
}

/// Next-period matrix equals last period's.
pub fn full_historical(prev: &CorrMatrix) -> CorrMatrix {
    prev.clone()
}

/// Every off-diagonal entry set to the mean of the upper triangle.
pub fn constant_correlation(prev: &CorrMatrix) -> Result<CorrMatrix> {
    let n = prev.len();
    if n < 2 {
        return Err(Error::InvalidArgument("constant correlation needs n >= 2".into()));
    }
    let upper = prev.upper();
    let mean = (upper.iter().sum::<f64>() / upper.len() as f64).clamp(-1.0, 1.0);
    let mut m = Array2::from_elem((n, n), mean);
    for i in 0..n {
        m[(i, i)] = 1.0;
    }
    CorrMatrix::new(prev.tickers.clone(), m)
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Ordinary least squares of asset returns on market returns.
pub fn estimate_market_model(asset_returns: &[f64], market_returns: &[f64]) -> Result<BetaEstimate> {
    if asset_returns.len() != market_returns.len() {
        return Err(Error::LengthMismatch {
            expected: market_returns.len(),
            got: asset_returns.len(),
        });
    }
    let n = asset_returns.len();
    if n < 3 {
        return Err(Error::SeriesTooShort { needed: 3, got: n });
    }
    let nf = n as f64;
    let ma = asset_returns.iter().sum::<f64>() / nf;
    let mm = market_returns.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, m) in asset_returns.iter().zip(market_returns) {
        sxy += (a - ma) * (m - mm);
        sxx += (m - mm) * (m - mm);
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let beta = sxy / sxx;
    let alpha = ma - beta * mm;
    let ssr: f64 = asset_returns
        .iter()
        .zip(market_returns)
        .map(|(a, m)| (a - alpha - beta * m).powi(2))
        .sum();
    Ok(BetaEstimate {
        alpha,
        beta,
        sigma_eps: (ssr / (nf - 2.0)).sqrt(),
        sigma_i: sample_sd(asset_returns),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleIndexOutput {
    pub matrix: CorrMatrix,
    /// Off-diagonal entries (each unordered pair counted once) clipped into [-1, 1].
    pub clipped: usize,
}

/// `rho_ij = beta_i beta_j sigma_m^2 / (sigma_i sigma_j)`, clipped to [-1, 1].
pub fn single_index(tickers: Vec<String>, betas: &[BetaEstimate], sigma_m: f64) -> Result<SingleIndexOutput> {
    let n = tickers.len();
    if betas.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: betas.len(),
        });
    }
    if !(sigma_m > 0.0) {
        return Err(Error::ZeroVariance);
    }
    if betas.iter().any(|b| !(b.sigma_i > 0.0)) {
        return Err(Error::ZeroVariance);
    }
    let mut m = Array2::eye(n);
    let mut clipped = 0;
    let s2 = sigma_m * sigma_m;
    for i in 0..n {
        for j in (i + 1)..n {
            let raw = betas[i].beta * betas[j].beta * s2 / (betas[i].sigma_i * betas[j].sigma_i);
            let v = raw.clamp(-1.0, 1.0);
            if v != raw {
                clipped += 1;
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(SingleIndexOutput {
        matrix: CorrMatrix::new(tickers, m)?,
        clipped,
    })
}

/// Sector-block means over ordered pairs: the divisor is `n_a (n_a - 1)` for
/// a sector paired with itself and `n_a n_b` across sectors.
pub fn multi_group(prev: &CorrMatrix, sectors: &SectorMap) -> Result<CorrMatrix> {
    let n = prev.len();
    let labels: Vec<&str> = prev
        .tickers
        .iter()
        .map(|t| sectors.get(t).ok_or_else(|| Error::MissingAuxData(format!("no sector for {t}"))))
        .collect::<Result<_>>()?;
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let sector_of: Vec<usize> = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect();
    let k = ids.len();
    let mut sum = vec![0.0; k * k];
    let mut count = vec![0usize; k * k];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let b = sector_of[i] * k + sector_of[j];
                sum[b] += prev.get(i, j);
                count[b] += 1;
            }
        }
    }
    let mut m = Array2::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let b = sector_of[i] * k + sector_of[j];
            if count[b] == 0 {
                return Err(Error::InvalidArgument(format!(
                    "sector pair ({}, {}) has no admissible asset pairs",
                    labels[i], labels[j]
                )));
            }
            let v = (sum[b] / count[b] as f64).clamp(-1.0, 1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    CorrMatrix::new(prev.tickers.clone(), m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    FullHistorical,
    ConstantCorrelation,
    SingleIndex,
    MultiGroup,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [
        Baseline::FullHistorical,
        Baseline::ConstantCorrelation,
        Baseline::SingleIndex,
        Baseline::MultiGroup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::FullHistorical => "full_historical",
            Baseline::ConstantCorrelation => "constant_correlation",
            Baseline::SingleIndex => "single_index",
            Baseline::MultiGroup => "multi_group",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline {s:?}")))
    }
}

/// Market return used by the single-index model.
#[derive(Debug, Clone, PartialEq)]
pub enum MarketProxy {
    /// Equal-weighted mean of the portfolio's daily returns.
    EqualWeighted,
    /// External index price series aligned with the price table's dates.
    Index(Vec<f64>),
}

/// Everything the baselines need beyond the correlation panel itself.
#[derive(Debug, Clone, Copy)]
pub struct BaselineInputs<'a> {
    /// Portfolio tickers in panel order.
    pub tickers: &'a [String],
    pub panel: &'a [CorrSeries],
    pub panel_config: &'a PanelConfig,
    pub prices: Option<&'a PriceTable>,
    pub sectors: Option<&'a SectorMap>,
    pub market: &'a MarketProxy,
    pub log_returns: bool,
}

impl BaselineInputs<'_> {
    /// Cross-sectional correlation matrix at one (offset, step) of the panel.
    pub fn matrix_at(&self, offset: usize, step: usize) -> Result<CorrMatrix> {
        let index: HashMap<&str, usize> = self.tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let n = self.tickers.len();
        let mut m = Array2::eye(n);
        let mut filled = 0usize;
        for s in self.panel.iter().filter(|s| s.offset == offset) {
            let (Some(&i), Some(&j)) = (index.get(s.first.as_str()), index.get(s.second.as_str())) else {
                continue;
            };
            let v = *s.values.get(step).ok_or(Error::SeriesTooShort {
                needed: step + 1,
                got: s.values.len(),
            })?;
            m[(i, j)] = v;
            m[(j, i)] = v;
            filled += 1;
        }
        if filled != n * n.saturating_sub(1) / 2 {
            return Err(Error::MissingAuxData(format!(
                "panel covers {filled} of {} pairs at offset {offset}",
                n * n.saturating_sub(1) / 2
            )));
        }
        CorrMatrix::new(self.tickers.to_vec(), m)
    }

    fn single_index_at(&self, offset: usize, step: usize) -> Result<SingleIndexOutput> {
        let prices = self
            .prices
            .ok_or_else(|| Error::MissingAuxData("single-index model needs the price table".into()))?;
        let cfg = self.panel_config;
        let span = window_span(step, cfg.window, cfg.stride, offset);
        if span.end > prices.n_dates() {
            return Err(Error::SeriesTooShort {
                needed: span.end,
                got: prices.n_dates(),
            });
        }
        let asset_returns: Vec<Vec<f64>> = self
            .tickers
            .iter()
            .map(|t| {
                let col = prices
                    .column_by_ticker(t)
                    .ok_or_else(|| Error::MissingAuxData(format!("no prices for {t}")))?;
                Ok(market_data::returns(&col[span.clone()], self.log_returns))
            })
            .collect::<Result<_>>()?;
        let market: Vec<f64> = match self.market {
            MarketProxy::EqualWeighted => {
                let len = asset_returns[0].len();
                (0..len)
                    .map(|t| asset_returns.iter().map(|r| r[t]).sum::<f64>() / asset_returns.len() as f64)
                    .collect()
            }
            MarketProxy::Index(series) => {
                if series.len() < span.end {
                    return Err(Error::MissingAuxData("market index shorter than the price table".into()));
                }
                market_data::returns(&series[span.clone()], self.log_returns)
            }
        };
        let betas = asset_returns
            .iter()
            .map(|r| estimate_market_model(r, &market))
            .collect::<Result<Vec<_>>>()?;
        single_index(self.tickers.to_vec(), &betas, sample_sd(&market))
    }

    /// The baseline's predicted matrix for the step following `step`.
    pub fn predict_matrix(&self, model: Baseline, offset: usize, step: usize) -> Result<(CorrMatrix, usize)> {
        match model {
            Baseline::FullHistorical => Ok((full_historical(&self.matrix_at(offset, step)?), 0)),
            Baseline::ConstantCorrelation => Ok((constant_correlation(&self.matrix_at(offset, step)?)?, 0)),
            Baseline::MultiGroup => {
                let sectors = self
                    .sectors
                    .ok_or_else(|| Error::MissingAuxData("multi-group model needs a sector map".into()))?;
                Ok((multi_group(&self.matrix_at(offset, step)?, sectors)?, 0))
            }
            Baseline::SingleIndex => {
                let out = self.single_index_at(offset, step)?;
                Ok((out.matrix, out.clipped))
            }
        }
    }
}

/// A baseline's prediction of the target (last) step of one walk-forward
/// slice, using the portfolio's state at the step before it.
pub fn predict_series(model: Baseline, series: &CorrSeries, role: SliceRole, inputs: &BaselineInputs<'_>) -> Result<f64> {
    let step = role.target_index() - 1;
    let (m, _) = inputs.predict_matrix(model, series.offset, step)?;
    let i = m
        .index_of(&series.first)
        .ok_or_else(|| Error::MissingAuxData(format!("{} not in portfolio", series.first)))?;
    let j = m
        .index_of(&series.second)
        .ok_or_else(|| Error::MissingAuxData(format!("{} not in portfolio", series.second)))?;
    Ok(m.get(i, j))
}

#[derive(Debug, Clone)]
pub struct BaselinePredictions {
    pub rows: Vec<PredictionRow>,
    pub clipped: usize,
}

/// Predictions for every series in the panel for one slice role, in panel order.
pub fn predict_panel(model: Baseline, role: SliceRole, inputs: &BaselineInputs<'_>) -> Result<BaselinePredictions> {
    let step = role.target_index() - 1;
    let mut cache: BTreeMap<usize, CorrMatrix> = BTreeMap::new();
    let mut clipped = 0;
    let mut rows = Vec::with_capacity(inputs.panel.len());
    for s in inputs.panel {
        let m = match cache.entry(s.offset) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                let (m, c) = inputs.predict_matrix(model, s.offset, step)?;
                clipped += c;
                e.insert(m)
            }
        };
        let i = m.index_of(&s.first).ok_or_else(|| Error::MissingAuxData(s.first.clone()))?;
        let j = m.index_of(&s.second).ok_or_else(|| Error::MissingAuxData(s.second.clone()))?;
        let y = *s.values.get(role.target_index()).ok_or(Error::SeriesTooShort {
            needed: role.target_index() + 1,
            got: s.values.len(),
        })?;
        rows.push(PredictionRow {
            first: s.first.clone(),
            second: s.second.clone(),
            offset: s.offset,
            role,
            yhat: m.get(i, j),
            y,
        });
    }
    Ok(BaselinePredictions { rows, clipped })
}

pub fn write_sector_map(path: &Path, meta: Option<&ArtifactMeta>, sectors: &SectorMap) -> Result<()> {
    io::write_text(path, meta, &sectors.to_csv_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("A{i}")).collect()
    }

    /// Random valid correlation matrix from normalized random vectors.
    fn random_corr(n: usize, rng: &mut ChaCha8Rng) -> CorrMatrix {
        let vecs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        let mut m = Array2::eye(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let d: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                m[(i, j)] = d.clamp(-1.0, 1.0);
                m[(j, i)] = m[(i, j)];
            }
        }
        CorrMatrix::new(names(n), m).unwrap()
    }

    #[test]
    fn rejects_invalid_matrices() {
        let mut m = Array2::eye(2);
        m[(0, 1)] = 0.5;
        assert!(CorrMatrix::new(names(2), m.clone()).is_err());
        m[(1, 0)] = 0.5;
        assert!(CorrMatrix::new(names(2), m).is_ok());
        assert!(CorrMatrix::from_upper(names(2), &[1.5]).is_err());
    }

    #[test]
    fn constant_correlation_cases() {
        let two = CorrMatrix::from_upper(names(2), &[0.3]).unwrap();
        assert_eq!(constant_correlation(&two).unwrap(), two);
        let three = CorrMatrix::from_upper(names(3), &[0.2, 0.4, 0.6]).unwrap();
        let cc = constant_correlation(&three).unwrap();
        assert!(cc.upper().iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert_eq!(constant_correlation(&cc).unwrap(), cc);
        let one = CorrMatrix::from_upper(names(1), &[]).unwrap();
        assert!(constant_correlation(&one).is_err());
    }

    #[test]
    fn market_model_exact_relations() {
        let m = [0.01, -0.02, 0.015, 0.003, -0.007];
        let same = estimate_market_model(&m, &m).unwrap();
        assert!((same.beta - 1.0).abs() < 1e-12 && same.alpha.abs() < 1e-15 && same.sigma_eps < 1e-12);
        let lin: Vec<f64> = m.iter().map(|v| 2.0 * v + 0.01).collect();
        let est = estimate_market_model(&lin, &m).unwrap();
        assert!((est.beta - 2.0).abs() < 1e-12);
        assert!((est.alpha - 0.01).abs() < 1e-12);
        assert!(matches!(estimate_market_model(&m, &[0.1; 5]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn market_model_recovers_beta_and_orthogonal_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let market: Vec<f64> = (0..500).map(|_| 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        let asset: Vec<f64> = market
            .iter()
            .map(|m| 0.0002 + 1.5 * m + 0.005 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let est = estimate_market_model(&asset, &market).unwrap();
        assert!((est.beta - 1.5).abs() < 0.1);
        let dot: f64 = asset
            .iter()
            .zip(&market)
            .map(|(a, m)| (a - est.alpha - est.beta * m) * m)
            .sum();
        let scale: f64 = market.iter().map(|m| m * m).sum();
        assert!(dot.abs() < 1e-10 * scale.max(1.0));
    }

    #[test]
    fn single_index_cases() {
        let unit = BetaEstimate {
            alpha: 0.0,
            beta: 1.0,
            sigma_eps: 0.0,
            sigma_i: 0.02,
        };
        let out = single_index(names(2), &[unit, unit], 0.02).unwrap();
        assert!((out.matrix.get(0, 1) - 1.0).abs() < 1e-15);
        let neutral = BetaEstimate { beta: 0.0, ..unit };
        let out = single_index(names(3), &[neutral, unit, unit], 0.02).unwrap();
        assert_eq!(out.matrix.get(0, 1), 0.0);
        assert_eq!(out.matrix.get(0, 2), 0.0);
        let big = BetaEstimate { beta: 3.0, ..unit };
        let out = single_index(names(2), &[big, big], 0.02).unwrap();
        assert_eq!(out.clipped, 1);
        assert_eq!(out.matrix.get(0, 1), 1.0);
        let flat = BetaEstimate { sigma_i: 0.0, ..unit };
        assert!(single_index(names(2), &[flat, unit], 0.02).is_err());
    }

    #[test]
    fn single_index_factor_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 5000;
        let betas_true = [0.8, 1.2, 1.5];
        let market: Vec<f64> = (0..n).map(|_| 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        let assets: Vec<Vec<f64>> = betas_true
            .iter()
            .map(|b| {
                market
                    .iter()
                    .map(|m| b * m + 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        let ests: Vec<BetaEstimate> = assets.iter().map(|a| estimate_market_model(a, &market).unwrap()).collect();
        let sm = sample_sd(&market);
        let out = single_index(names(3), &ests, sm).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                // separate evaluator of the closed form
                let formula = ests[i].beta * ests[j].beta * sm.powi(2) / (ests[i].sigma_i * ests[j].sigma_i);
                assert_eq!(out.matrix.get(i, j), formula);
                let realized = crate::corrgen::pearson(&assets[i], &assets[j]).unwrap();
                assert!((formula - realized).abs() < 0.05, "{formula} vs {realized}");
            }
        }
    }

    #[test]
    fn multi_group_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prev = random_corr(4, &mut rng);
        let one = SectorMap::new(names(4).into_iter().map(|t| (t, "X".to_string())).collect());
        let mg = multi_group(&prev, &one).unwrap();
        // brute force: ordered-pair mean equals the unordered mean
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    s += prev.get(i, j);
                }
            }
        }
        let brute = s / 12.0;
        assert!(mg.upper().iter().all(|v| (v - brute).abs() < 1e-12));
        let singles = SectorMap::new(names(4).into_iter().map(|t| (t.clone(), t)).collect());
        let mg = multi_group(&prev, &singles).unwrap();
        for (a, b) in mg.upper().iter().zip(prev.upper()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_group_two_by_two() {
        // A0,A1 in X; A2,A3 in Y
        let prev = CorrMatrix::from_upper(names(4), &[0.8, 0.1, 0.3, 0.2, 0.5, 0.6]).unwrap();
        let sectors = SectorMap::new(vec![
            ("A0".into(), "X".into()),
            ("A1".into(), "X".into()),
            ("A2".into(), "Y".into()),
            ("A3".into(), "Y".into()),
        ]);
        let mg = multi_group(&prev, &sectors).unwrap();
        assert!((mg.get(0, 1) - 0.8).abs() < 1e-15);
        assert!((mg.get(2, 3) - 0.6).abs() < 1e-15);
        let cross = (0.1 + 0.3 + 0.2 + 0.5) / 4.0;
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert!((mg.get(i, j) - cross).abs() < 1e-15);
        }
        let partial = SectorMap::new(vec![("A0".into(), "X".into())]);
        assert!(matches!(multi_group(&prev, &partial), Err(Error::MissingAuxData(_))));
    }

    #[test]
    fn sector_map_round_trip() {
        let s = SectorMap::new(vec![("B".into(), "tech".into()), ("A".into(), "energy".into())]);
        assert_eq!(SectorMap::parse(&s.to_csv_string()).unwrap(), s);
    }

    fn tiny_panel() -> (Vec<String>, Vec<CorrSeries>) {
        let tickers = names(3);
        let mk = |a: usize, b: usize, base: f64| CorrSeries {
            first: tickers[a].clone(),
            second: tickers[b].clone(),
            offset: 1,
            values: (0..24).map(|k| base + 0.01 * k as f64).collect(),
        };
        let panel = vec![mk(0, 1, 0.1), mk(0, 2, 0.2), mk(1, 2, 0.3)];
        (tickers, panel)
    }

    #[test]
    fn panel_predictions() {
        let (tickers, panel) = tiny_panel();
        let cfg = PanelConfig::default();
        let market = MarketProxy::EqualWeighted;
        let sectors = SectorMap::new(tickers.iter().map(|t| (t.clone(), "X".to_string())).collect());
        let inputs = BaselineInputs {
            tickers: &tickers,
            panel: &panel,
            panel_config: &cfg,
            prices: None,
            sectors: Some(&sectors),
            market: &market,
            log_returns: false,
        };
        // test2: target index 23, context index 22
        let fh = predict_series(Baseline::FullHistorical, &panel[0], SliceRole::Test2, &inputs).unwrap();
        assert!((fh - 0.32).abs() < 1e-12);
        let cc = predict_panel(Baseline::ConstantCorrelation, SliceRole::Dev, &inputs).unwrap();
        let mg = predict_panel(Baseline::MultiGroup, SliceRole::Dev, &inputs).unwrap();
        for (a, b) in cc.rows.iter().zip(&mg.rows) {
            assert!((a.yhat - b.yhat).abs() < 1e-12);
            assert!((a.yhat - (0.1 + 0.2 + 0.3) / 3.0 - 0.20).abs() < 1e-12);
        }
        assert_eq!(cc.rows[2].y, panel[2].values[21]);
        assert!(matches!(
            predict_series(Baseline::SingleIndex, &panel[0], SliceRole::Dev, &inputs),
            Err(Error::MissingAuxData(_))
        ));
    }

    #[test]
    fn two_asset_constant_correlation_is_pair_value() {
        let tickers = names(2);
        let panel = vec![CorrSeries {
            first: tickers[0].clone(),
            second: tickers[1].clone(),
            offset: 1,
            values: (0..24).map(|k| -0.5 + 0.02 * k as f64).collect(),
        }];
        let cfg = PanelConfig::default();
        let market = MarketProxy::EqualWeighted;
        let inputs = BaselineInputs {
            tickers: &tickers,
            panel: &panel,
            panel_config: &cfg,
            prices: None,
            sectors: None,
            market: &market,
            log_returns: false,
        };
        let v = predict_series(Baseline::ConstantCorrelation, &panel[0], SliceRole::Train, &inputs).unwrap();
        assert_eq!(v, panel[0].values[19]);
    }
}
