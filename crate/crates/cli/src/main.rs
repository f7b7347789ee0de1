use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use corrcast::baselines::write_sector_map;
use corrcast::synth::{synth_panel, SynthPanelConfig};
use corrcast::{Run, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "corrcast", version, about = "Pairwise correlation forecasting with an ARIMA-LSTM hybrid")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Seed for universe sampling, training and resampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    prices: Option<PathBuf>,
    #[arg(long, global = true)]
    sectors: Option<PathBuf>,
    #[arg(long, global = true)]
    market_ticker: Option<String>,
    #[arg(long, global = true)]
    universe_size: Option<usize>,
    #[arg(long, global = true)]
    hidden_size: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    dropout: Option<f64>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    sample_size: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean the price table and sample the universe.
    Ingest,
    /// Rolling-window correlation series for every universe pair.
    GenPanel,
    /// Fit ARIMA per series and slice and write the residual datasets.
    ArimaResiduals,
    /// Train the residual LSTM and keep the selected epoch.
    Train,
    /// Hybrid predictions and metrics on the held-out slices.
    Evaluate,
    /// Predictions from the four classical models.
    Baselines,
    /// Re-score the trained model on resampled universes.
    Robustness,
    /// Aggregate metrics into the comparison table.
    Report,
    /// Every stage in order.
    RunAll,
    /// Write a synthetic price panel and sector map.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    tickers: usize,
    #[arg(long, default_value_t = 2517)]
    days: usize,
    #[arg(long, default_value_t = 3)]
    n_sectors: usize,
    #[arg(long, default_value_t = 0.0)]
    missing_rate: f64,
}

impl Global {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            c.set_seed(s);
        }
        if let Some(p) = &self.prices {
            c.data.prices = Some(p.clone());
        }
        if let Some(p) = &self.sectors {
            c.data.sectors = Some(p.clone());
        }
        if let Some(t) = &self.market_ticker {
            c.data.market_ticker = Some(t.clone());
        }
        if let Some(v) = self.universe_size {
            c.data.universe_size = v;
        }
        if let Some(v) = self.hidden_size {
            c.train.hidden_size = v;
        }
        if let Some(v) = self.batch_size {
            c.train.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            c.train.learning_rate = v;
        }
        if let Some(v) = self.max_epochs {
            c.train.max_epochs = v;
        }
        if let Some(v) = self.dropout {
            c.train.dropout_p = v;
        }
        if let Some(v) = self.iterations {
            c.robustness.iterations = v;
        }
        if let Some(v) = self.sample_size {
            c.robustness.sample_size = v;
        }
        Ok(c)
    }
}

fn synth(global: &Global, args: &SynthArgs) -> Result<()> {
    let config = SynthPanelConfig {
        n_tickers: args.tickers,
        n_days: args.days,
        n_sectors: args.n_sectors,
        seed: global.seed.unwrap_or(0),
        missing_rate: args.missing_rate,
        ..SynthPanelConfig::default()
    };
    let panel = synth_panel(&config)?;
    std::fs::create_dir_all(&global.out).with_context(|| format!("creating {}", global.out.display()))?;
    let prices = global.out.join("prices.csv");
    let sectors = global.out.join("sectors.csv");
    panel.prices.write_csv(&prices, None)?;
    write_sector_map(&sectors, None, &panel.sectors)?;
    println!("wrote {} and {}", prices.display(), sectors.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    if let Command::Synth(args) = &cli.command {
        return synth(&cli.global, args);
    }
    let run = Run::new(cli.global.config()?, &cli.global.out)?;
    match &cli.command {
        Command::Ingest => {
            let r = run.ingest()?;
            println!(
                "ingest: {} of {} tickers kept, universe {} (requested {}), pool {}",
                r.kept_tickers, r.input_tickers, r.universe_size, r.universe_requested, r.pool_size
            );
        }
        Command::GenPanel => println!("gen-panel: {} series", run.gen_panel()?),
        Command::ArimaResiduals => {
            let r = run.arima_residuals()?;
            println!(
                "arima-residuals: {} rows, {} fallbacks, {} degenerate",
                r.rows.values().sum::<usize>(),
                r.fallbacks,
                r.degenerate
            );
        }
        Command::Train => {
            let r = run.train()?;
            println!(
                "train: {} epochs, converged {}, selected epoch {}",
                r.epochs, r.converged, r.selected_epoch
            );
        }
        Command::Evaluate => {
            for (role, m) in run.evaluate()?.metrics {
                println!("evaluate {role}: mse {:.6} mae {:.6}", m.mse, m.mae);
            }
        }
        Command::Baselines => {
            let r = run.baselines()?;
            println!("baselines: {} models scored", r.metrics.len());
        }
        Command::Robustness => {
            let r = run.robustness()?;
            match &r.summary {
                Some(s) => println!("robustness: {} runs, mean mse {:.6}", s.iterations, s.mean_mse),
                None => println!("robustness: no runs"),
            }
        }
        Command::Report => print!("{}", run.report()?.table.to_text()),
        Command::RunAll => print!("{}", run.run_all()?.table.to_text()),
        Command::Synth(_) => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
