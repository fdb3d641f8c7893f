//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use floodcast_core::simnet::{self, Scenario, SimTrace};
use floodcast_core::{DesignMatrix, PredictorConfig, RobustFitConfig, TimeSet, WeightFunction};

use crate::forecast::{self, Metrics};
use crate::ingest::ingest_readings;

pub use floodcast_core::simnet::DEFAULT_SEED;

/// What a successful command observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Alarm,
}

/// Command-line overrides of predictor, schedule and fit settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub flood_line: Option<f64>,
    pub threshold: Option<f64>,
    pub time_set: Option<Vec<f64>>,
    pub action_time: Option<f64>,
    pub capacity: Option<usize>,
    pub weight_fn: Option<WeightFunction>,
    pub max_iter: Option<usize>,
    pub reliability_period: Option<f64>,
}

impl Overrides {
    pub fn robust(&self, mut base: RobustFitConfig) -> RobustFitConfig {
        if let Some(w) = self.weight_fn {
            base.weight_function = w;
        }
        if let Some(n) = self.max_iter {
            base.max_iterations = n;
        }
        base
    }

    pub fn apply(&self, base: PredictorConfig) -> Result<PredictorConfig> {
        let intervals = self
            .time_set
            .clone()
            .unwrap_or_else(|| base.time_set.intervals().to_vec());
        let action_time = self.action_time.unwrap_or(base.time_set.action_time());
        let config = PredictorConfig {
            flood_line: self.flood_line.unwrap_or(base.flood_line),
            threshold: self.threshold.unwrap_or(base.threshold),
            reliability_period: self.reliability_period.or(base.reliability_period),
            capacity: self.capacity.unwrap_or(base.capacity),
            time_set: TimeSet::new(intervals, action_time)?,
            robust: self.robust(base.robust),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn apply_to_scenario(&self, scenario: &mut Scenario) -> Result<()> {
        let p = &mut scenario.predictor;
        let merged = self.apply(p.to_config()?)?;
        p.flood_line = merged.flood_line;
        p.threshold = merged.threshold;
        p.capacity = merged.capacity;
        p.time_set = merged.time_set.intervals().to_vec();
        p.action_time = merged.time_set.action_time();
        p.reliability_period = merged.reliability_period;
        p.robust = merged.robust;
        scenario.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Fit { input: PathBuf },
    Forecast { input: PathBuf, history: Option<PathBuf> },
    Simulate { scenario: PathBuf, seeds: Vec<u64> },
    Report { input: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub overrides: Overrides,
}

pub fn execute(config: &RunConfig) -> Result<Outcome> {
    match &config.command {
        Command::Fit { input } => fit(input, &config.out_dir, &config.overrides),
        Command::Forecast { input, history } => {
            forecast(input, history.as_deref(), &config.out_dir, &config.overrides)
        }
        Command::Simulate { scenario, seeds } => {
            simulate(scenario, config.seed, seeds, &config.out_dir, &config.overrides)
        }
        Command::Report { input } => report(input, &config.out_dir, &config.overrides),
    }
}

fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn fit(input: &Path, out_dir: &Path, overrides: &Overrides) -> Result<Outcome> {
    let data = ingest_readings(input)?;
    let params: Vec<Vec<f64>> = data.readings.iter().map(|r| r.parameters()).collect();
    let levels: Vec<f64> = data.readings.iter().map(|r| r.level).collect();
    let x = DesignMatrix::from_parameters(&params)?;
    let result = floodcast_core::robust_fit(&x, &levels, &overrides.robust(RobustFitConfig::default()))?;

    let mut text = String::new();
    let names = std::iter::once("intercept").chain(data.columns[2..].iter().map(String::as_str));
    for (name, c) in names.zip(result.coefficients.as_slice()) {
        text.push_str(&format!("coef_{name}={c}\n"));
    }
    text.push_str(&format!("iterations={}\n", result.iterations));
    text.push_str(&format!("converged={}\n", result.converged));
    text.push_str(&format!("robust_scale={}\n", result.robust_scale));
    text.push_str(&format!("rows={}\n", data.readings.len()));
    let downweighted = result.final_weights.as_slice().iter().filter(|w| **w < 0.05).count();
    text.push_str(&format!("downweighted_rows={downweighted}\n"));
    fs::create_dir_all(out_dir)?;
    write(&out_dir.join("fit.txt"), &text)?;
    print!("{text}");
    Ok(Outcome::Clean)
}

fn forecast(input: &Path, history: Option<&Path>, out_dir: &Path, overrides: &Overrides) -> Result<Outcome> {
    let live = ingest_readings(input)?;
    let past = match history {
        Some(path) => ingest_readings(path)?.readings,
        None => Vec::new(),
    };
    if let Some(first) = past.first() {
        if first.extras.len() != live.readings[0].extras.len() {
            bail!("history and input have different parameter columns");
        }
    }
    let config = overrides.apply(PredictorConfig::default())?;
    let report = forecast::run_forecast(config, &past, live.readings)?;
    for d in &report.diagnostics {
        eprintln!("warning: {d}");
    }
    forecast::write_artifacts(out_dir, &report.outputs, &report.metrics)?;
    print!("{}", report.metrics.to_text());
    Ok(outcome(&report.metrics))
}

fn outcome(metrics: &Metrics) -> Outcome {
    if metrics.alarms > 0 {
        Outcome::Alarm
    } else {
        Outcome::Clean
    }
}

fn report(input: &Path, out_dir: &Path, overrides: &Overrides) -> Result<Outcome> {
    let outputs = forecast::read_predictions(input)?;
    let base = PredictorConfig::default();
    let flood_line = overrides.flood_line.unwrap_or(base.flood_line);
    let threshold = overrides.threshold.unwrap_or(base.threshold);
    let metrics = Metrics::from_outputs(&outputs, outputs.len(), flood_line, threshold);
    fs::create_dir_all(out_dir)?;
    write(&out_dir.join("metrics.txt"), metrics.to_text())?;
    write(&out_dir.join("levels.svg"), forecast::level_chart(&outputs, flood_line).render())?;
    write(&out_dir.join("errors.svg"), forecast::error_chart(&outputs, flood_line).render())?;
    print!("{}", metrics.to_text());
    Ok(outcome(&metrics))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Scenario::from_toml(&text).with_context(|| format!("invalid scenario {}", path.display()))
}

pub fn write_trace(dir: &Path, trace: &SimTrace) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write(&dir.join("trace.jsonl"), trace.events_jsonl())?;
    let mut energy = Vec::new();
    trace.write_energy_csv(&mut energy)?;
    write(&dir.join("energy.csv"), energy)?;
    let mut alarms = Vec::new();
    trace.write_alarms_csv(&mut alarms)?;
    write(&dir.join("alarms.csv"), alarms)?;
    let c = trace.counters;
    let summary = format!(
        "events={}\nalarms={}\nsuspected={}\nmessages_sent={}\nmessages_delivered={}\nmessages_dropped={}\nmessages_in_flight={}\ncorrupted_deliveries={}\nresample_requests={}\npredictions_from_corrupted={}\n",
        trace.events.len(),
        trace.alarms.len(),
        trace.suspected.len(),
        c.sent,
        c.delivered,
        c.dropped,
        c.in_flight,
        c.corrupted_deliveries,
        c.resample_requests,
        c.predictions_from_corrupted,
    );
    write(&dir.join("summary.txt"), summary)?;
    Ok(())
}

fn simulate(path: &Path, seed: Option<u64>, seeds: &[u64], out_dir: &Path, overrides: &Overrides) -> Result<Outcome> {
    let mut scenario = load_scenario(path)?;
    overrides.apply_to_scenario(&mut scenario)?;
    if seeds.is_empty() {
        if let Some(seed) = seed {
            scenario.seed = seed;
        }
        let trace = simnet::simulate(&scenario)?;
        write_trace(out_dir, &trace)?;
        println!(
            "events={} alarms={} suspected={}",
            trace.events.len(),
            trace.alarms.len(),
            trace.suspected.len()
        );
        return Ok(Outcome::Clean);
    }
    // independent seeds share nothing, so they can run side by side
    let results: Vec<Result<SimTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|seed| {
                let mut s = scenario.clone();
                s.seed = *seed;
                scope.spawn(move || simnet::simulate(&s).map_err(anyhow::Error::from))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    for (seed, result) in seeds.iter().zip(results) {
        let trace = result.with_context(|| format!("seed {seed}"))?;
        write_trace(&out_dir.join(format!("seed-{seed}")), &trace)?;
        println!("seed={seed} events={} alarms={}", trace.events.len(), trace.alarms.len());
    }
    Ok(Outcome::Clean)
}
