//! Benchmark harness: runs an executor x shape x overhead x load matrix and
//! reports per-inference records plus a median-latency summary.
//!
//! Matrix cells run strictly one at a time so one cell's background load
//! never contaminates another. The first inference of every cell is warm-up
//! and is not recorded; the headline statistic is the median, which resists
//! scheduler noise on shared machines.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arena::Arena;
use crate::error::{Error, Result};
use crate::exec::{Engine, LoadProfile, OverheadModel, Strategy};
use crate::io::generate_windows;
use crate::model::{LstmModel, ModelConfig};

/// One measured (executor, config, load) latency sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub executor: String,
    pub layers: usize,
    pub hidden: usize,
    pub steps: usize,
    pub workers: usize,
    pub overhead_us: u64,
    pub utilization: f64,
    pub rep: usize,
    pub latency_us: f64,
    pub dispatched_units: u64,
    pub predicted_class: usize,
}

/// The benchmark matrix: every combination of executor, shape, overhead and
/// utilization runs `reps` repetitions over seeded windows.
#[derive(Debug, Clone)]
pub struct BenchSuite {
    pub executors: Vec<Strategy>,
    pub layers: Vec<usize>,
    pub hidden: Vec<usize>,
    pub input_dim: usize,
    pub time_steps: usize,
    pub classes: usize,
    pub overheads_us: Vec<u64>,
    pub utilizations: Vec<f64>,
    pub workers: usize,
    pub reps: usize,
    pub model_seed: u64,
    pub data_seed: u64,
    pub window_count: usize,
}

impl BenchSuite {
    /// The default matrix: all three executors, L in {1,2,3}, H in
    /// {32,64,128,256}, one hundred reps over one hundred seeded windows.
    pub fn default_matrix(workers: usize, overhead_us: u64, reps: usize, model_seed: u64) -> Self {
        Self {
            executors: vec![Strategy::Sequential, Strategy::Coarse, Strategy::FineGrained],
            layers: vec![1, 2, 3],
            hidden: vec![32, 64, 128, 256],
            input_dim: 9,
            time_steps: 128,
            classes: 6,
            overheads_us: vec![overhead_us],
            utilizations: vec![0.0],
            workers,
            reps,
            model_seed,
            data_seed: 7,
            window_count: 100,
        }
    }

    /// Records the matrix will produce: one per cell per rep.
    pub fn record_count(&self) -> usize {
        self.executors.len()
            * self.layers.len()
            * self.hidden.len()
            * self.overheads_us.len()
            * self.utilizations.len()
            * self.reps
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: SuiteFile =
            toml::from_str(&text).map_err(|e| Error::SuiteFile(e.to_string()))?;
        file.into_suite()
    }
}

/// On-disk TOML schema for custom suites; omitted fields take the default
/// matrix values.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    executors: Option<Vec<String>>,
    layers: Option<Vec<usize>>,
    hidden: Option<Vec<usize>>,
    input_dim: Option<usize>,
    time_steps: Option<usize>,
    classes: Option<usize>,
    overheads_us: Option<Vec<u64>>,
    utilizations: Option<Vec<f64>>,
    workers: Option<usize>,
    reps: Option<usize>,
    model_seed: Option<u64>,
    data_seed: Option<u64>,
    window_count: Option<usize>,
}

impl SuiteFile {
    fn into_suite(self) -> Result<BenchSuite> {
        let mut suite = BenchSuite::default_matrix(4, 20, 100, 42);
        if let Some(names) = self.executors {
            suite.executors = names
                .iter()
                .map(|n| n.parse::<Strategy>().map_err(Error::SuiteFile))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = self.layers {
            suite.layers = v;
        }
        if let Some(v) = self.hidden {
            suite.hidden = v;
        }
        if let Some(v) = self.input_dim {
            suite.input_dim = v;
        }
        if let Some(v) = self.time_steps {
            suite.time_steps = v;
        }
        if let Some(v) = self.classes {
            suite.classes = v;
        }
        if let Some(v) = self.overheads_us {
            suite.overheads_us = v;
        }
        if let Some(v) = self.utilizations {
            suite.utilizations = v;
        }
        if let Some(v) = self.workers {
            suite.workers = v;
        }
        if let Some(v) = self.reps {
            suite.reps = v;
        }
        if let Some(v) = self.model_seed {
            suite.model_seed = v;
        }
        if let Some(v) = self.data_seed {
            suite.data_seed = v;
        }
        if let Some(v) = self.window_count {
            suite.window_count = v;
        }
        Ok(suite)
    }
}

/// Run the whole matrix and return one record per (cell, rep). Rep `i` runs
/// window `i % window_count`; each cell's warm-up inference is discarded.
pub fn run_benchmark(suite: &BenchSuite) -> Result<Vec<BenchRecord>> {
    let windows = generate_windows(
        suite.data_seed,
        suite.window_count.max(1),
        suite.time_steps,
        suite.input_dim,
    );
    let mut records = Vec::with_capacity(suite.record_count());

    for &layers in &suite.layers {
        for &hidden in &suite.hidden {
            let config = ModelConfig::new(
                layers,
                hidden,
                suite.input_dim,
                suite.time_steps,
                suite.classes,
            )?;
            let model = LstmModel::generate(suite.model_seed, &config);
            for &overhead_us in &suite.overheads_us {
                for &utilization in &suite.utilizations {
                    let engine = Engine::new(OverheadModel::new(
                        std::time::Duration::from_micros(overhead_us),
                        suite.workers,
                    ));
                    let mut arena = Arena::new(&config, suite.workers)?;
                    for &strategy in &suite.executors {
                        let load = if utilization > 0.0 {
                            Some(engine.simulate_load(&LoadProfile::new(utilization)?)?)
                        } else {
                            None
                        };
                        // warm-up, not recorded
                        engine.run(&model, &windows[0], strategy, &mut arena)?;
                        for rep in 0..suite.reps {
                            let window = &windows[rep % windows.len()];
                            let result = engine.run(&model, window, strategy, &mut arena)?;
                            records.push(BenchRecord {
                                executor: strategy.name().to_string(),
                                layers,
                                hidden,
                                steps: suite.time_steps,
                                workers: suite.workers,
                                overhead_us,
                                utilization,
                                rep,
                                latency_us: result.telemetry.latency.as_secs_f64() * 1e6,
                                dispatched_units: result.telemetry.dispatched_units,
                                predicted_class: result.class,
                            });
                        }
                        drop(load);
                    }
                }
            }
        }
    }
    Ok(records)
}

/// Median latency per matrix cell and speedup against the sequential cell of
/// the same shape and settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub executor: String,
    pub layers: usize,
    pub hidden: usize,
    pub overhead_us: u64,
    pub utilization: f64,
    pub median_latency_us: f64,
    /// `None` when the suite has no sequential rows to compare against.
    pub speedup_vs_sequential: Option<f64>,
}

pub fn summarize(records: &[BenchRecord]) -> Vec<SummaryRow> {
    type Key = (usize, usize, u64, u64);
    let mut groups: BTreeMap<(Key, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = (r.layers, r.hidden, r.overhead_us, r.utilization.to_bits());
        groups
            .entry((key, r.executor.clone()))
            .or_default()
            .push(r.latency_us);
    }
    let mut baselines: BTreeMap<Key, f64> = BTreeMap::new();
    for ((key, executor), latencies) in &groups {
        if executor == Strategy::Sequential.name() {
            baselines.insert(*key, median(latencies));
        }
    }
    groups
        .into_iter()
        .map(|((key, executor), latencies)| {
            let med = median(&latencies);
            SummaryRow {
                executor,
                layers: key.0,
                hidden: key.1,
                overhead_us: key.2,
                utilization: f64::from_bits(key.3),
                median_latency_us: med,
                speedup_vs_sequential: baselines.get(&key).map(|b| b / med),
            }
        })
        .collect()
}

/// Median of a non-empty slice; the mean of the two middle values when the
/// count is even.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn write_csv(records: &[BenchRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(Error::Csv)?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Render the summary as an aligned text table.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>3} {:>5} {:>8} {:>5} {:>14} {:>9}\n",
        "executor", "L", "H", "ovhd_us", "util", "median_us", "speedup"
    ));
    for row in rows {
        let speedup = row
            .speedup_vs_sequential
            .map(|s| format!("{s:.2}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<8} {:>3} {:>5} {:>8} {:>5.2} {:>14.1} {:>9}\n",
            row.executor,
            row.layers,
            row.hidden,
            row.overhead_us,
            row.utilization,
            row.median_latency_us,
            speedup
        ));
    }
    out
}
