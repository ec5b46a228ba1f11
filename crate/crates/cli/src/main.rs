//! `lclstm`: Lee-Carter + LSTM mortality forecasting from the command line.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lclstm::data::{log_rates, MortalitySurface};
use lclstm::diagnostics::{battery, diagnostics_table_csv};
use lclstm::lstm::{grid_search, train};
use lclstm::pipeline::{deviance_trace_csv, fit_training, residuals_csv, run_forecast, ForecastRun};
use lclstm::simulate::{hmd_table, simulate, KappaLaw, SimulationSpec};
use lclstm::uncertainty::noise_diagnostics_gate;

use crate::config::{parse_range, RunConfig};

#[derive(Parser)]
#[command(name = "lclstm", version, about = "Lee-Carter mortality forecasting with an LSTM time index")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Poisson Lee-Carter model on the training window.
    Fit(RunArgs),
    /// Forecast κ and log rates with LC-LSTM and the random-walk baseline.
    Forecast(RunArgs),
    /// Forecast and score both models against the held-out years.
    Evaluate(RunArgs),
    /// Residual diagnostics for the tuned network (or for a supplied series).
    Diagnose(DiagnoseArgs),
    /// Write a synthetic surface with known Lee-Carter parameters.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: RunArgs,
    /// CSV whose last column is the series to test, instead of the network residuals.
    #[arg(long)]
    series: Option<PathBuf>,
    /// ADF lag order; defaults to trunc((n − 1)^(1/3)).
    #[arg(long)]
    adf_lags: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LawKind {
    Rwd,
    Piecewise,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "0-100")]
    ages: String,
    #[arg(long, default_value = "1950-2018")]
    years: String,
    /// Exposure in every cell.
    #[arg(long, default_value_t = 1e5)]
    exposure: f64,
    #[arg(long, value_enum, default_value = "rwd")]
    kappa_law: LawKind,
    #[arg(long, default_value_t = 0.0)]
    start: f64,
    #[arg(long, default_value_t = -1.8, allow_negative_numbers = true)]
    drift: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    slope_before: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    slope_after: f64,
    /// Break index for the piecewise law; defaults to mid-sample.
    #[arg(long)]
    break_at: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Deaths equal their expectation instead of a Poisson draw.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&resolve(&a)?),
        Command::Forecast(a) => cmd_forecast(&resolve(&a)?),
        Command::Evaluate(a) => cmd_evaluate(&resolve(&a)?),
        Command::Diagnose(a) => cmd_diagnose(&resolve(&a.common)?, a.series.as_deref(), a.adf_lags),
        Command::Simulate(a) => cmd_simulate(&a),
    }
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    RunConfig::load(args.config.as_deref(), &args.run)
}

struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    fn create(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Records the resolved settings, including the master seed, and the file list.
    fn finish(mut self, command: &str, settings: &impl Serialize) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a, S: Serialize> {
            command: &'a str,
            version: &'a str,
            files: &'a [String],
            settings: &'a S,
        }
        self.written.sort();
        let manifest = Manifest { command, version: env!("CARGO_PKG_VERSION"), files: &self.written, settings };
        let text = toml::to_string(&manifest).context("cannot serialise the run manifest")?;
        let path = self.dir.join("manifest.toml");
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        eprintln!("wrote {} files to {}", self.written.len() + 1, self.dir.display());
        Ok(())
    }
}

/// The run configuration with every default made explicit, for the manifest.
fn resolved_settings(cfg: &RunConfig, surface: &MortalitySurface) -> Result<RunConfig> {
    let pipeline = cfg.pipeline(surface)?;
    let mut out = cfg.clone();
    let years = surface.years();
    let ages = surface.ages();
    out.ages = Some(format!("{}-{}", ages[0], ages[ages.len() - 1]));
    out.years = Some(format!("{}-{}", years[0], years[years.len() - 1]));
    out.gender = Some(pipeline.label.gender.clone());
    out.origin = Some(pipeline.origin);
    out.horizon = Some(pipeline.horizon);
    out.horizon_end = None;
    out.alpha = Some(pipeline.alpha);
    out.bootstrap_samples = Some(pipeline.bootstrap_samples);
    out.seed = Some(pipeline.seed);
    out.pi_variance_law = Some(pipeline.pi_variance_law);
    out.report_ages = Some(pipeline.report_ages.clone());
    out.out = None;
    Ok(out)
}

fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let surface = cfg.load_surface()?;
    let pipeline = cfg.pipeline(&surface)?;
    let (train_surface, fit) = fit_training(&surface, &pipeline)?;
    let p = &fit.params;
    let mut out = Output::create(cfg.out_dir())?;
    out.write("lc_params.csv", &p.to_csv())?;
    out.write("alpha.csv", &indexed_csv("age", "alpha", p.ages.iter(), &p.alpha))?;
    out.write("beta.csv", &indexed_csv("age", "beta", p.ages.iter(), &p.beta))?;
    out.write("kappa.csv", &indexed_csv("year", "kappa", p.years.iter(), &p.kappa))?;
    out.write("deviance_trace.csv", &deviance_trace_csv(&fit))?;
    out.write("residuals.csv", &residuals_csv(train_surface.ages(), train_surface.years(), &fit))?;
    out.write("surface.csv", &train_surface.to_csv())?;
    println!(
        "Lee-Carter fit {}-{}: {} ages, {} sweeps, deviance {:.6}",
        p.years[0],
        p.years[p.years.len() - 1],
        p.ages.len(),
        fit.sweeps,
        fit.final_deviance()
    );
    out.finish("fit", &resolved_settings(cfg, &surface)?)
}

fn indexed_csv<'a, T: std::fmt::Display + 'a>(
    key: &str,
    name: &str,
    index: impl Iterator<Item = &'a T>,
    values: &[f64],
) -> String {
    let mut s = format!("{key},{name}\n");
    for (i, v) in index.zip(values) {
        let _ = writeln!(s, "{i},{v}");
    }
    s
}

fn forecast(cfg: &RunConfig) -> Result<(MortalitySurface, ForecastRun)> {
    let surface = cfg.load_surface()?;
    let pipeline = cfg.pipeline(&surface)?;
    let run = run_forecast(&surface, &pipeline)?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    Ok((surface, run))
}

fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    let (surface, run) = forecast(cfg)?;
    let mut out = Output::create(cfg.out_dir())?;
    for (name, contents) in run.artifacts() {
        out.write(&name, &contents)?;
    }
    let pi = &run.kappa_pi_lstm;
    let last = pi.len() - 1;
    println!(
        "κ forecast {}-{}: LC-LSTM {:.3} [{:.3}, {:.3}], RWD {:.3} [{:.3}, {:.3}] in {}",
        pi.years[0],
        pi.years[last],
        pi.point[last],
        pi.lower[last],
        pi.upper[last],
        run.kappa_pi_arima.point[last],
        run.kappa_pi_arima.lower[last],
        run.kappa_pi_arima.upper[last],
        pi.years[last]
    );
    out.finish("forecast", &resolved_settings(cfg, &surface)?)
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let (surface, run) = forecast(cfg)?;
    if run.metrics.is_none() {
        let last = surface.years()[surface.n_years() - 1];
        bail!(
            "the data end in {last}, before the last forecast year {}; evaluation needs held-out years",
            run.config.origin + run.config.horizon as i32
        );
    }
    let rows = run.metrics_rows();
    let mut out = Output::create(cfg.out_dir())?;
    out.write("metrics.csv", &lclstm::metrics::metrics_table_csv(&rows))?;
    out.write("diagnostics.csv", &diagnostics_table_csv(&run.config.label, &run.diagnostics))?;
    println!("{:<8} {:<12} {:>12} {:>8} {:>12}", "model", "series", "RMSE", "PICP", "MPIW");
    for r in &rows {
        let m = &r.metrics;
        println!("{:<8} {:<12} {:>12.4} {:>8.3} {:>12.4}", r.model, r.series, m.rmse, m.picp, m.mpiw);
    }
    println!();
    print_diagnostics(&run.diagnostics);
    out.finish("evaluate", &resolved_settings(cfg, &surface)?)
}

fn print_diagnostics(reports: &[lclstm::TestReport]) {
    println!("{:<20} {:>16} {:>10}", "test", "statistic", "p-value");
    for r in reports {
        println!("{:<20} {:>16.5} {:>10.5}", r.test_name, r.statistic, r.p_value);
    }
}

fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read series file {}", path.display()))?;
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let Some(field) = line.split(',').next_back().map(str::trim) else { continue };
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if k == 0 => {} // header
            Err(_) => bail!("{}:{}: '{field}' is not a number", path.display(), k + 1),
        }
    }
    Ok(values)
}

fn cmd_diagnose(cfg: &RunConfig, series: Option<&Path>, adf_lags: Option<usize>) -> Result<()> {
    let mut out = Output::create(cfg.out_dir())?;
    let (sample, label) = match series {
        Some(path) => {
            let label = lclstm::metrics::RunLabel {
                country: cfg.country.clone().unwrap_or_else(|| "series".into()),
                gender: String::new(),
                period: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            };
            (read_series(path)?, label)
        }
        None => {
            let surface = cfg.load_surface()?;
            let pipeline = cfg.pipeline(&surface)?;
            let (_, fit) = fit_training(&surface, &pipeline)?;
            let kappa = &fit.params.kappa;
            let tuned = grid_search(kappa, &pipeline.grid_configs())?.tuned();
            let model = train(&tuned, kappa, None)?.model;
            let (fitted, _) = model.fitted(kappa)?;
            let residuals: Vec<f64> = kappa[1..].iter().zip(&fitted).map(|(k, f)| k - f).collect();
            let years = &fit.params.years[1..];
            out.write("lstm_residuals.csv", &indexed_csv("year", "residual", years.iter(), &residuals))?;
            (residuals, pipeline.label)
        }
    };
    let (reports, warnings) = battery(&sample, adf_lags);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let gate = noise_diagnostics_gate(&reports);
    out.write("diagnostics.csv", &diagnostics_table_csv(&label, &reports))?;
    let mut g = String::from("key,value\n");
    let _ = writeln!(g, "spreading,{}", gate.spreading.as_str());
    if let Some(p) = gate.adf_p_value {
        let _ = writeln!(g, "adf_p_value,{p}");
    }
    for (name, p) in &gate.normality {
        let _ = writeln!(g, "{name}_p_value,{p}");
    }
    out.write("gate.csv", &g)?;
    print_diagnostics(&reports);
    println!("spreading: {}", gate.spreading.as_str());
    if let Some(w) = &gate.warning {
        eprintln!("warning: {w}");
    }
    #[derive(Serialize)]
    struct Settings<'a> {
        series: Option<String>,
        adf_lags: Option<usize>,
        run: &'a RunConfig,
    }
    let settings = Settings { series: series.map(|p| p.display().to_string()), adf_lags, run: cfg };
    out.finish("diagnose", &settings)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (age_min, age_max) = parse_range::<u32>(&args.ages, "ages")?;
    let (year_min, year_max) = parse_range::<i32>(&args.years, "years")?;
    let n_years = (year_max - year_min + 1) as usize;
    let kappa = match args.kappa_law {
        LawKind::Rwd => KappaLaw::RandomWalkDrift { start: args.start, drift: args.drift, sigma: args.sigma },
        LawKind::Piecewise => KappaLaw::PiecewiseLinear {
            start: args.start,
            slope_before: args.slope_before,
            slope_after: args.slope_after,
            break_at: args.break_at.unwrap_or(n_years / 2),
            noise_sd: args.noise_sd,
        },
    };
    let spec = SimulationSpec {
        age_min,
        age_max,
        year_min,
        n_years,
        exposure: args.exposure,
        kappa,
        poisson: !args.deterministic,
        seed: args.seed,
    };
    let sim = simulate(&spec)?;
    let s = &sim.surface;
    let mut out = Output::create(args.out.clone())?;
    out.write("Deaths_1x1.txt", &hmd_table("Deaths", s, s.deaths()))?;
    out.write("Exposures_1x1.txt", &hmd_table("Exposures", s, s.exposures()))?;
    out.write("surface.csv", &s.to_csv())?;
    out.write("truth_params.csv", &sim.truth.to_csv())?;
    let lr = log_rates(s);
    let flagged = (0..s.n_ages()).flat_map(|i| (0..s.n_years()).map(move |j| (i, j))).filter(|&(i, j)| lr.is_flagged(i, j)).count();
    println!("simulated {} ages × {} years ({flagged} zero-death cells)", s.n_ages(), s.n_years());
    out.finish("simulate", &spec)
}
