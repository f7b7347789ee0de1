//! Stage runners over a run directory. Each stage reads its upstream
//! artifacts, writes its own, and stamps every file with the stage name and
//! the configuration hash.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arima::{self, ArimaFit, ArimaOrder, FitOptions, SeriesId, INPUT_STEPS};
use crate::baselines::{Baseline, BaselineInputs, MarketProxy, SectorMap};
use crate::config::RunConfig;
use crate::corrgen::{self, CorrSeries, SliceRole, SLICE_LEN};
use crate::error::{Error, Result};
use crate::eval::{
    self, ComparisonReport, MetricSet, PredictionRow, RobustnessInputs, RobustnessReport, RobustnessSummary, HYBRID,
    MODELS,
};
use crate::io::{self, ArtifactMeta};
use crate::market_data::{self, AssetFilterReport, PriceTable, TableFormat};
use crate::neuralnet::{self, Checkpoint, CheckpointSink, Dataset, Model};

/// Rows per inference chunk.
const PREDICT_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArimaStageConfig {
    pub candidates: Vec<ArimaOrder>,
    pub fit: FitOptions,
}

impl Default for ArimaStageConfig {
    fn default() -> Self {
        Self {
            candidates: ArimaOrder::CANDIDATES.to_vec(),
            fit: FitOptions::default(),
        }
    }
}

/// One supervised row with the ARIMA context needed to turn a residual
/// prediction back into a correlation prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub id: SeriesId,
    pub order: ArimaOrder,
    pub x: Vec<f64>,
    pub y: f64,
    /// ARIMA fitted value at the slice's last step.
    pub fitted: f64,
    /// Observed correlation at the slice's last step.
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArimaReport {
    pub rows: BTreeMap<SliceRole, usize>,
    /// Times each order won the AIC comparison.
    pub selected: BTreeMap<String, usize>,
    /// Times each order failed to fit.
    pub failures: BTreeMap<String, usize>,
    /// Slices where every candidate failed and a random walk was used.
    pub fallbacks: usize,
    /// Selected fits whose innovation variance hit the floor.
    pub degenerate: usize,
}

#[derive(Debug, Clone)]
pub struct ResidualSet {
    /// Role-major, then panel order.
    pub records: Vec<ResidualRecord>,
    pub report: ArimaReport,
}

struct SliceFit {
    record: ResidualRecord,
    failures: Vec<ArimaOrder>,
    fallback: bool,
    degenerate: bool,
}

fn fit_slice(series: &CorrSeries, role: SliceRole, cfg: &ArimaStageConfig) -> Result<SliceFit> {
    let start = role.start();
    let slice = series.values.get(start..start + SLICE_LEN).ok_or(Error::SeriesTooShort {
        needed: start + SLICE_LEN,
        got: series.values.len(),
    })?;
    let (fit, failures, fallback) = match arima::select_best_order_with(slice, &cfg.candidates, &cfg.fit) {
        Ok(sel) => (sel.fit, sel.failures.into_iter().map(|(o, _)| o).collect(), false),
        Err(Error::NoFit) => {
            let rw = ArimaFit::with_params(ArimaOrder::new(0, 1, 0), 0.0, vec![], vec![], 1.0);
            (rw, cfg.candidates.clone(), true)
        }
        Err(e) => return Err(e),
    };
    let residuals = arima::residuals(&fit, slice)?;
    let fitted = slice[SLICE_LEN - 1] - residuals[SLICE_LEN - 1];
    let (x, y) = arima::extract_xy(&residuals)?;
    Ok(SliceFit {
        record: ResidualRecord {
            id: SeriesId {
                first: series.first.clone(),
                second: series.second.clone(),
                offset: series.offset,
                role,
            },
            order: fit.order,
            x,
            y,
            fitted,
            actual: slice[SLICE_LEN - 1],
        },
        failures,
        fallback,
        degenerate: fit.degenerate,
    })
}

/// Least-AIC ARIMA fit and one-step residuals for every series and role.
pub fn fit_residuals(panel: &[CorrSeries], roles: &[SliceRole], cfg: &ArimaStageConfig) -> Result<ResidualSet> {
    let mut report = ArimaReport::default();
    let mut records = Vec::with_capacity(panel.len() * roles.len());
    for &role in roles {
        let fits = panel
            .par_iter()
            .map(|s| fit_slice(s, role, cfg))
            .collect::<Result<Vec<_>>>()?;
        report.rows.insert(role, fits.len());
        for f in fits {
            if f.fallback {
                report.fallbacks += 1;
            } else {
                *report.selected.entry(f.record.order.to_string()).or_default() += 1;
            }
            for o in f.failures {
                *report.failures.entry(o.to_string()).or_default() += 1;
            }
            report.degenerate += usize::from(f.degenerate);
            records.push(f.record);
        }
    }
    Ok(ResidualSet { records, report })
}

pub fn dataset_of(records: &[ResidualRecord]) -> Result<Dataset> {
    let flat: Vec<f64> = records.iter().flat_map(|r| r.x.iter().copied()).collect();
    let x = Array2::from_shape_vec((records.len(), INPUT_STEPS), flat)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Dataset::new(x, records.iter().map(|r| r.y).collect())
}

/// Correlation predictions: ARIMA fitted value plus the network's residual.
pub fn hybrid_predictions(model: &Model, records: &[ResidualRecord], hidden_scale: f64) -> Result<Vec<PredictionRow>> {
    let data = dataset_of(records)?;
    let starts: Vec<usize> = (0..records.len()).step_by(PREDICT_CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&s| {
            let e = (s + PREDICT_CHUNK).min(records.len());
            neuralnet::predict(model, data.x.slice(ndarray::s![s..e, ..]), hidden_scale)
        })
        .collect::<Result<Vec<_>>>()?;
    let residual_hat = parts.iter().flat_map(|p| p.iter().copied());
    Ok(records
        .iter()
        .zip(residual_hat)
        .map(|(r, e)| PredictionRow {
            first: r.id.first.clone(),
            second: r.id.second.clone(),
            offset: r.id.offset,
            role: r.id.role,
            yhat: r.fitted + e,
            y: r.actual,
        })
        .collect())
}

/// Writes `{role}_X.csv`, `{role}_Y.csv` and `{role}_meta.csv` for each role present.
pub fn write_residuals(dir: &Path, meta: Option<&ArtifactMeta>, records: &[ResidualRecord]) -> Result<()> {
    for role in SliceRole::ALL {
        let rows: Vec<&ResidualRecord> = records.iter().filter(|r| r.id.role == role).collect();
        if rows.is_empty() {
            continue;
        }
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| r.x.clone()).collect();
        let ys: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.y]).collect();
        io::write_matrix(&dir.join(format!("{role}_X.csv")), meta, &xs)?;
        io::write_matrix(&dir.join(format!("{role}_Y.csv")), meta, &ys)?;
        let mut body = String::from("ticker_i,ticker_j,offset,p,d,q,fitted_21,actual_21\n");
        for r in rows {
            let _ = writeln!(
                body,
                "{},{},{},{},{},{},{}",
                r.id.first,
                r.id.second,
                r.id.offset,
                r.order.p,
                r.order.d,
                r.order.q,
                io::join_f64(&[r.fitted, r.actual])
            );
        }
        io::write_text(&dir.join(format!("{role}_meta.csv")), meta, &body)?;
    }
    Ok(())
}

pub fn read_residuals(dir: &Path, role: SliceRole) -> Result<Vec<ResidualRecord>> {
    let xs = io::read_matrix(&dir.join(format!("{role}_X.csv")), INPUT_STEPS)?;
    let ys = io::read_matrix(&dir.join(format!("{role}_Y.csv")), 1)?;
    let meta_path = dir.join(format!("{role}_meta.csv"));
    let text = io::read_text(&meta_path)?;
    let mut rdr = io::csv_reader(&text, true);
    let mut out = Vec::with_capacity(xs.len());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 8 {
            return Err(Error::LengthMismatch {
                expected: 8,
                got: rec.len(),
            });
        }
        let int = |j: usize| {
            rec[j].parse::<usize>().map_err(|_| Error::Parse {
                line,
                column: j + 1,
                message: format!("not a count: {:?}", &rec[j]),
            })
        };
        let (x, y) = match (xs.get(i), ys.get(i)) {
            (Some(x), Some(y)) => (x.clone(), y[0]),
            _ => {
                return Err(Error::LengthMismatch {
                    expected: xs.len(),
                    got: i + 1,
                })
            }
        };
        out.push(ResidualRecord {
            id: SeriesId {
                first: rec[0].to_string(),
                second: rec[1].to_string(),
                offset: int(2)?,
                role,
            },
            order: ArimaOrder::new(int(3)?, int(4)?, int(5)?),
            x,
            y,
            fitted: io::parse_f64(&rec[6], line, 7)?,
            actual: io::parse_f64(&rec[7], line, 8)?,
        });
    }
    if out.len() != xs.len() || out.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            got: out.len(),
        });
    }
    Ok(out)
}

/// Artifact layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn prices_clean(&self) -> PathBuf {
        self.path("prices_clean.csv")
    }
    pub fn universe(&self) -> PathBuf {
        self.path("universe.txt")
    }
    pub fn panel(&self) -> PathBuf {
        self.path("panel.csv")
    }
    pub fn residuals(&self) -> PathBuf {
        self.path("residuals")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.path("checkpoints")
    }
    pub fn model(&self) -> PathBuf {
        self.path("model.json")
    }
    pub fn predictions(&self, model: &str) -> PathBuf {
        self.root.join("predictions").join(format!("{model}.csv"))
    }
}

/// A validated configuration bound to its run directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub hash: String,
    pub dir: RunDir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub meta: ArtifactMeta,
    pub input_dates: usize,
    pub input_tickers: usize,
    pub filter: AssetFilterReport,
    pub kept_tickers: usize,
    pub universe_requested: usize,
    pub universe_size: usize,
    /// Kept tickers outside the universe, available for resampling.
    pub pool_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaStageReport {
    pub meta: ArtifactMeta,
    #[serde(flatten)]
    pub report: ArimaReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub meta: ArtifactMeta,
    pub epochs: usize,
    pub converged: bool,
    pub selected_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: ArtifactMeta,
    pub model: String,
    pub metrics: BTreeMap<SliceRole, MetricSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub meta: ArtifactMeta,
    /// Single-index entries clipped into [-1, 1], per dataset.
    pub single_index_clipped: BTreeMap<SliceRole, usize>,
    pub metrics: BTreeMap<String, BTreeMap<SliceRole, MetricSet>>,
}

const ROBUSTNESS_NOTE: &str = "each sampled universe of n tickers yields n(n-1)/2 pairs x one row per offset \
(225 rows for 10 tickers and 5 offsets); a count of 180 would correspond to 4 offsets";

fn read_universe(path: &Path) -> Result<Vec<String>> {
    Ok(io::read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

impl Run {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let hash = config.hash()?;
        Ok(Self {
            config,
            hash,
            dir: RunDir::new(out),
        })
    }

    pub fn meta(&self, stage: &str) -> ArtifactMeta {
        ArtifactMeta::new(stage, self.hash.clone())
    }

    /// Echoes the effective configuration and records the stage's wall-clock
    /// start in `run_meta.json`, the only file carrying timestamps.
    fn begin(&self, stage: &str) -> Result<ArtifactMeta> {
        let meta = self.meta(stage);
        let mut body = format!("# corrcast config={}\n", self.hash);
        body.push_str(&self.config.to_toml()?);
        io::write_text(&self.dir.path("effective_config.toml"), None, &body)?;
        let path = self.dir.path("run_meta.json");
        let mut stamps: BTreeMap<String, u64> = if path.exists() {
            io::read_json(&path).unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        stamps.insert(stage.to_string(), now);
        io::write_json(&path, &stamps)?;
        Ok(meta)
    }

    fn prices_clean(&self) -> Result<PriceTable> {
        let path = self.dir.prices_clean();
        market_data::parse_prices(&io::read_text(&path)?, TableFormat::default())
    }

    /// Loads, filters and forward-fills the price table and samples the universe.
    pub fn ingest(&self) -> Result<IngestReport> {
        let meta = self.begin("ingest")?;
        let d = &self.config.data;
        let path = d
            .prices
            .as_ref()
            .ok_or_else(|| Error::Config("data.prices is not set".into()))?;
        let raw = market_data::load_prices_with(path, TableFormat { delimiter: d.delimiter as u8 })?;
        let (kept, filter) = market_data::filter_assets(&raw, d.max_missing_ratio, d.max_gap)?;
        let clean = market_data::forward_fill(&kept)?;
        let candidates: Vec<String> = clean
            .tickers()
            .iter()
            .filter(|t| Some(t.as_str()) != d.market_ticker.as_deref())
            .cloned()
            .collect();
        if candidates.len() < 2 {
            return Err(Error::EmptyUniverse);
        }
        let n = d.universe_size.min(candidates.len());
        let universe = market_data::sample_tickers(&candidates, n, d.universe_seed)?;
        clean.write_csv(&self.dir.prices_clean(), Some(&meta))?;
        let mut body = meta.header_line();
        for t in &universe {
            body.push_str(t);
            body.push('\n');
        }
        io::write_text(&self.dir.universe(), None, &body)?;
        let report = IngestReport {
            meta,
            input_dates: raw.n_dates(),
            input_tickers: raw.n_tickers(),
            filter,
            kept_tickers: clean.n_tickers(),
            universe_requested: d.universe_size,
            universe_size: universe.len(),
            pool_size: candidates.len() - universe.len(),
        };
        io::write_json(&self.dir.path("ingest_report.json"), &report)?;
        Ok(report)
    }

    /// Rolling-correlation panel over the universe and its walk-forward slices.
    pub fn gen_panel(&self) -> Result<usize> {
        let meta = self.begin("gen-panel")?;
        let prices = self.prices_clean()?;
        let universe = read_universe(&self.dir.universe())?;
        let table = prices.select(&universe)?;
        let panel = corrgen::build_corr_panel(&table, &self.config.panel)?;
        corrgen::write_panel(&self.dir.panel(), Some(&meta), &panel)?;
        corrgen::write_slices(&self.dir.path("slices"), Some(&meta), &panel)?;
        Ok(panel.len())
    }

    pub fn arima_residuals(&self) -> Result<ArimaReport> {
        let meta = self.begin("arima-residuals")?;
        let panel = corrgen::read_panel(&self.dir.panel())?;
        let set = fit_residuals(&panel, &SliceRole::ALL, &self.config.arima)?;
        write_residuals(&self.dir.residuals(), Some(&meta), &set.records)?;
        io::write_json(
            &self.dir.path("arima_report.json"),
            &ArimaStageReport {
                meta,
                report: set.report.clone(),
            },
        )?;
        Ok(set.report)
    }

    pub fn train(&self) -> Result<TrainSummary> {
        let meta = self.begin("train")?;
        let train = dataset_of(&read_residuals(&self.dir.residuals(), SliceRole::Train)?)?;
        let dev = dataset_of(&read_residuals(&self.dir.residuals(), SliceRole::Dev)?)?;
        let ckpt_dir = self.dir.checkpoints();
        if ckpt_dir.exists() {
            fs::remove_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
        }
        let sink = CheckpointSink {
            dir: ckpt_dir,
            meta: Some(meta.clone()),
        };
        let outcome = neuralnet::train(&train, &dev, &self.config.train, Some(&sink))?;
        neuralnet::write_epoch_log(&self.dir.path("epoch_log.csv"), Some(&meta), &outcome.records)?;
        let selected = eval::learning_curve_export(&self.dir.path("learning_curve.csv"), Some(&meta), &outcome.records)?;
        let chosen = &outcome.checkpoints[selected - 1];
        neuralnet::save_checkpoint(&self.dir.model(), chosen)?;
        let summary = TrainSummary {
            meta,
            epochs: outcome.records.len(),
            converged: outcome.converged,
            selected_epoch: selected,
        };
        io::write_json(&self.dir.path("train_report.json"), &summary)?;
        Ok(summary)
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        neuralnet::load_checkpoint(&self.dir.model())
    }

    /// Hybrid predictions on the dev, test1 and test2 targets.
    pub fn evaluate(&self) -> Result<EvaluationReport> {
        let meta = self.begin("evaluate")?;
        let ckpt = self.checkpoint()?;
        let mut rows = Vec::new();
        let mut metrics = BTreeMap::new();
        for role in eval::DATASETS {
            let records = read_residuals(&self.dir.residuals(), role)?;
            let r = hybrid_predictions(&ckpt.model, &records, ckpt.config.inference_scale())?;
            metrics.insert(role, eval::metrics_of(&r)?);
            rows.extend(r);
        }
        eval::write_predictions(&self.dir.predictions(HYBRID), Some(&meta), &rows)?;
        let report = EvaluationReport {
            meta,
            model: HYBRID.to_string(),
            metrics,
        };
        io::write_json(&self.dir.path("evaluation.json"), &report)?;
        Ok(report)
    }

    pub fn baselines(&self) -> Result<BaselineReport> {
        let meta = self.begin("baselines")?;
        let panel = corrgen::read_panel(&self.dir.panel())?;
        let prices = self.prices_clean()?;
        let universe = read_universe(&self.dir.universe())?;
        let sectors = match &self.config.data.sectors {
            Some(p) => SectorMap::load(p)?,
            None => return Err(Error::MissingAuxData("data.sectors is required by the multi-group model".into())),
        };
        let market = match &self.config.data.market_ticker {
            Some(t) => MarketProxy::Index(
                prices
                    .column_by_ticker(t)
                    .ok_or_else(|| Error::MissingAuxData(format!("market ticker {t} not in the price table")))?
                    .to_vec(),
            ),
            None => MarketProxy::EqualWeighted,
        };
        let inputs = BaselineInputs {
            tickers: &universe,
            panel: &panel,
            panel_config: &self.config.panel,
            prices: Some(&prices),
            sectors: Some(&sectors),
            market: &market,
            log_returns: self.config.baselines.log_returns,
        };
        let mut report = BaselineReport {
            meta: meta.clone(),
            single_index_clipped: BTreeMap::new(),
            metrics: BTreeMap::new(),
        };
        for model in Baseline::ALL {
            let mut rows = Vec::new();
            let mut per_role = BTreeMap::new();
            for role in eval::DATASETS {
                let out = crate::baselines::predict_panel(model, role, &inputs)?;
                if model == Baseline::SingleIndex {
                    report.single_index_clipped.insert(role, out.clipped);
                }
                per_role.insert(role, eval::metrics_of(&out.rows)?);
                rows.extend(out.rows);
            }
            eval::write_predictions(&self.dir.predictions(model.name()), Some(&meta), &rows)?;
            report.metrics.insert(model.name().to_string(), per_role);
        }
        io::write_json(&self.dir.path("baselines_report.json"), &report)?;
        Ok(report)
    }

    pub fn robustness(&self) -> Result<RobustnessReport> {
        let meta = self.begin("robustness")?;
        let ckpt = self.checkpoint()?;
        let prices = self.prices_clean()?;
        let universe = read_universe(&self.dir.universe())?;
        let pool: Vec<String> = prices
            .tickers()
            .iter()
            .filter(|t| !universe.contains(t) && Some(t.as_str()) != self.config.data.market_ticker.as_deref())
            .cloned()
            .collect();
        let runs = eval::robustness_study(
            RobustnessInputs {
                prices: &prices,
                checkpoint: &ckpt,
                panel: &self.config.panel,
                arima: &self.config.arima,
            },
            &universe,
            &pool,
            &self.config.robustness,
        )?;
        let report = RobustnessReport {
            meta,
            config: self.config.robustness.clone(),
            summary: RobustnessSummary::of(&runs),
            runs,
            note: ROBUSTNESS_NOTE.to_string(),
        };
        io::write_json(&self.dir.path("robustness.json"), &report)?;
        Ok(report)
    }

    /// Aggregates every model's predictions into the comparison table.
    pub fn report(&self) -> Result<ComparisonReport> {
        let meta = self.begin("report")?;
        let mut predictions = BTreeMap::new();
        for model in MODELS {
            predictions.insert(model.to_string(), eval::read_predictions(&self.dir.predictions(model))?);
        }
        let table = eval::compare_models(&predictions)?;
        let robustness_path = self.dir.path("robustness.json");
        let robustness = if robustness_path.exists() {
            let r: RobustnessReport = io::read_json(&robustness_path)?;
            r.summary
        } else {
            None
        };
        let report = ComparisonReport { meta, table, robustness };
        io::write_json(&self.dir.path("comparison.json"), &report)?;
        io::write_text(
            &self.dir.path("comparison.txt"),
            Some(&report.meta),
            &report.table.to_text(),
        )?;
        Ok(report)
    }

    /// Every stage in order; robustness runs only when the pool is large enough.
    pub fn run_all(&self) -> Result<ComparisonReport> {
        let ingest = self.ingest()?;
        self.gen_panel()?;
        self.arima_residuals()?;
        self.train()?;
        self.evaluate()?;
        self.baselines()?;
        if ingest.pool_size >= self.config.robustness.sample_size && self.config.robustness.iterations > 0 {
            self.robustness()?;
        }
        self.report()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SynthPanelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series(seed: u64) -> CorrSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = synth::simulate_arima(&[0.3], &[], 1, 0.0, 0.05, 24, &mut rng);
        CorrSeries {
            first: "A".into(),
            second: format!("B{seed}"),
            offset: 1,
            values: v.iter().map(|x| x.clamp(-0.99, 0.99)).collect(),
        }
    }

    #[test]
    fn residual_rows_reconstruct_the_series() {
        let panel: Vec<CorrSeries> = (0..4).map(series).collect();
        let set = fit_residuals(&panel, &SliceRole::ALL, &ArimaStageConfig::default()).unwrap();
        assert_eq!(set.records.len(), 16);
        assert_eq!(set.report.rows[&SliceRole::Test2], 4);
        assert_eq!(set.report.selected.values().sum::<usize>() + set.report.fallbacks, 16);
        for r in &set.records {
            let truth = &panel.iter().find(|s| s.second == r.id.second).unwrap().values;
            assert_eq!(r.actual, truth[r.id.role.target_index()]);
            assert!((r.fitted + r.y - r.actual).abs() < 1e-12);
            assert_eq!(r.x[0], 0.0);
        }
        // a zero network gives back the ARIMA fitted values
        let rows = hybrid_predictions(&Model::zeros(3, 1), &set.records, 1.0).unwrap();
        for (row, rec) in rows.iter().zip(&set.records) {
            assert_eq!(row.yhat, rec.fitted);
        }
    }

    #[test]
    fn residual_files_round_trip() {
        let panel: Vec<CorrSeries> = (0..3).map(series).collect();
        let set = fit_residuals(&panel, &[SliceRole::Dev], &ArimaStageConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_residuals(dir.path(), Some(&ArtifactMeta::new("arima-residuals", "h")), &set.records).unwrap();
        assert_eq!(read_residuals(dir.path(), SliceRole::Dev).unwrap(), set.records);
        assert!(matches!(
            read_residuals(dir.path(), SliceRole::Train),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn stage_order_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let run = Run::new(RunConfig::default(), dir.path()).unwrap();
        match run.gen_panel() {
            Err(Error::MissingArtifact(p)) => assert!(p.ends_with("prices_clean.csv")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_end_to_end_run() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = synth::synth_panel(&SynthPanelConfig {
            n_tickers: 8,
            n_days: 2517,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let prices = dir.path().join("prices.csv");
        let sectors = dir.path().join("sectors.csv");
        fixture.prices.write_csv(&prices, None).unwrap();
        crate::baselines::write_sector_map(&sectors, None, &fixture.sectors).unwrap();
        let mut cfg = RunConfig::default();
        cfg.data.prices = Some(prices);
        cfg.data.sectors = Some(sectors);
        cfg.data.universe_size = 5;
        cfg.train.max_epochs = 3;
        cfg.train.hidden_size = 4;
        cfg.robustness.iterations = 2;
        cfg.robustness.sample_size = 3;
        let run = Run::new(cfg, dir.path().join("run")).unwrap();
        let report = run.run_all().unwrap();
        assert_eq!(report.table.cells.len(), 15);
        for name in [
            "prices_clean.csv",
            "universe.txt",
            "panel.csv",
            "slices/test2.csv",
            "residuals/train_X.csv",
            "checkpoints/epoch3.json",
            "model.json",
            "learning_curve.csv",
            "predictions/multi_group.csv",
            "robustness.json",
            "comparison.txt",
            "effective_config.toml",
            "run_meta.json",
        ] {
            assert!(run.dir.path(name).exists(), "{name}");
        }
        let panel = fs::read_to_string(run.dir.panel()).unwrap();
        assert!(panel.starts_with(&format!("# corrcast stage=gen-panel config={}", run.hash)));
        assert_eq!(panel.lines().count(), 1 + 10 * 5);
    }
}
