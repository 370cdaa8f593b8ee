//! Execution strategies, the dispatch-overhead model, and the load-aware
//! offloading policy.
//!
//! Three strategies factorize a cell's combined matmul differently:
//!
//! * `Sequential` — one work unit per cell, computed inline on the control
//!   thread. The single-threaded baseline; the overhead setting is irrelevant
//!   because nothing is submitted to the pool.
//! * `FineGrained` — one work unit per output column (`4H` per cell), the
//!   desktop-style decomposition. Every unit pays the per-dispatch overhead,
//!   which is what makes this path pathological when overhead is
//!   non-negligible.
//! * `Coarse` — columns packed into `min(P, 4H)` chunks, one per worker,
//!   amortizing the dispatch cost.
//!
//! Work units never split a single output column, so per-column summation
//! order is identical everywhere and all three strategies produce
//! bit-identical results.

mod pool;

pub use pool::{LoadHandle, WorkerPool};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::AtomicUsize;
use std::time::{Duration, Instant};

use crate::arena::Arena;
use crate::error::{Error, Result};
use crate::kernels::classify;
use crate::model::{LstmModel, ModelConfig};
use crate::plan::CellId;
use crate::wavefront::{execute_wavefront, CellExecutor, CellWork};

use pool::{CellFollowUp, UnitTask};

/// How a cell's gate columns are factorized into schedulable work units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Sequential,
    FineGrained,
    Coarse,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Sequential, Strategy::Coarse, Strategy::FineGrained];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Sequential => "seq",
            Strategy::FineGrained => "fine",
            Strategy::Coarse => "coarse",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "seq" | "sequential" => Ok(Strategy::Sequential),
            "fine" | "fine-grained" => Ok(Strategy::FineGrained),
            "coarse" => Ok(Strategy::Coarse),
            other => Err(format!("unknown executor '{other}' (expected seq|coarse|fine)")),
        }
    }
}

/// One schedulable chunk of a cell's combined matmul.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkUnit {
    pub column_range: Range<usize>,
    pub cell: CellId,
}

/// Factorization of one cell's `4H` gate columns into work units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchPlan {
    pub strategy: Strategy,
    pub units_per_cell: usize,
    /// Columns in the largest unit: `ceil(4H / units_per_cell)`. Unit sizes
    /// differ by at most one column.
    pub chunk_size: usize,
}

impl DispatchPlan {
    /// Balanced column ranges covering `[0, gate_width)`: the first
    /// `gate_width % units` ranges get one extra column.
    pub fn column_ranges(&self, gate_width: usize) -> impl Iterator<Item = Range<usize>> {
        balanced_ranges(gate_width, self.units_per_cell)
    }

    /// The work units of one cell.
    pub fn work_units(&self, cell: CellId, gate_width: usize) -> impl Iterator<Item = WorkUnit> {
        self.column_ranges(gate_width)
            .map(move |column_range| WorkUnit { column_range, cell })
    }
}

fn balanced_ranges(total: usize, units: usize) -> impl Iterator<Item = Range<usize>> {
    let units = units.min(total).max(1);
    let q = total / units;
    let r = total % units;
    (0..units).map(move |i| {
        let start = i * q + i.min(r);
        let len = q + usize::from(i < r);
        start..start + len
    })
}

/// Build the factorization for `strategy` given `worker_count` pool workers.
pub fn plan_dispatch(
    strategy: Strategy,
    config: &ModelConfig,
    worker_count: usize,
) -> DispatchPlan {
    let width = config.gate_width();
    let units_per_cell = match strategy {
        Strategy::Sequential => 1,
        Strategy::FineGrained => width,
        Strategy::Coarse => worker_count.max(1).min(width),
    };
    DispatchPlan {
        strategy,
        units_per_cell,
        chunk_size: width.div_ceil(units_per_cell),
    }
}

/// Fixed cost charged to every work-unit submission, modeling the call and
/// scheduling overhead of offloading, plus the pool width it applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverheadModel {
    pub per_dispatch_overhead: Duration,
    pub worker_count: usize,
}

impl OverheadModel {
    pub fn new(per_dispatch_overhead: Duration, worker_count: usize) -> Self {
        Self {
            per_dispatch_overhead,
            worker_count,
        }
    }

    /// No injected overhead; pure pool dispatch cost remains.
    pub fn free(worker_count: usize) -> Self {
        Self::new(Duration::ZERO, worker_count)
    }
}

impl Default for OverheadModel {
    fn default() -> Self {
        Self::new(Duration::from_micros(20), 4)
    }
}

/// Fraction of pool workers kept busy by a synthetic background task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadProfile {
    utilization: f64,
}

impl LoadProfile {
    pub fn new(utilization: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&utilization) {
            return Err(Error::InvalidConfig(format!(
                "utilization {utilization} outside [0, 1]"
            )));
        }
        Ok(Self { utilization })
    }

    pub fn utilization(&self) -> f64 {
        self.utilization
    }
}

/// Utilization bucket boundaries: low below `low`, high at or above `high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadThresholds {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl Default for LoadThresholds {
    fn default() -> Self {
        Self {
            low: 0.30,
            medium: 0.50,
            high: 0.70,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadBucket {
    Low,
    Medium,
    High,
}

impl LoadThresholds {
    /// Bucket of a utilization value. The high boundary is inclusive.
    pub fn bucket(&self, utilization: f64) -> LoadBucket {
        if utilization >= self.high {
            LoadBucket::High
        } else if utilization < self.low {
            LoadBucket::Low
        } else {
            LoadBucket::Medium
        }
    }
}

/// Offload-or-not policy: parallel execution pays off under low and medium
/// load, but a saturated pool is better left alone — fall back to the
/// sequential path. Depends only on the utilization bucket.
pub fn choose_executor(profile: &LoadProfile, thresholds: &LoadThresholds) -> Strategy {
    match thresholds.bucket(profile.utilization()) {
        LoadBucket::High => Strategy::Sequential,
        LoadBucket::Low | LoadBucket::Medium => Strategy::Coarse,
    }
}

/// Measured facts about one inference.
#[derive(Debug, Clone)]
pub struct Telemetry {
    pub latency: Duration,
    /// Work units executed (submitted to the pool, or counted per cell on
    /// the inline path).
    pub dispatched_units: u64,
    /// Total spin-wait injected at submission time. Zero on the sequential
    /// path, which never submits.
    pub injected_overhead: Duration,
    /// Arena allocation counter after the run; constant across runs.
    pub arena_allocations: u64,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub class: usize,
    pub final_hidden: Vec<f32>,
    pub telemetry: Telemetry,
}

/// Inference engine: a persistent worker pool plus the overhead model that
/// prices each dispatch.
pub struct Engine {
    pool: WorkerPool,
    overhead: OverheadModel,
}

impl Engine {
    pub fn new(overhead: OverheadModel) -> Self {
        Self {
            pool: WorkerPool::new(overhead.worker_count),
            overhead,
        }
    }

    pub fn worker_count(&self) -> usize {
        self.pool.size()
    }

    pub fn overhead(&self) -> &OverheadModel {
        &self.overhead
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }

    /// Run one inference over a `T x D` time-major window.
    ///
    /// The model is assumed validated. Returns the predicted class, the
    /// final hidden vector, and telemetry. Fails with [`Error::Busy`] if the
    /// arena is claimed by another in-flight inference.
    pub fn run(
        &self,
        model: &LstmModel,
        window: &[f32],
        strategy: Strategy,
        arena: &mut Arena,
    ) -> Result<InferenceResult> {
        let guard = arena.begin_exclusive()?;
        let start = Instant::now();
        let (final_hidden, dispatched_units, injected_overhead) = match strategy {
            Strategy::Sequential => {
                let mut exec = InlineExecutor::default();
                let h = execute_wavefront(model, window, &mut exec, arena)?;
                (h, exec.dispatched, Duration::ZERO)
            }
            Strategy::FineGrained | Strategy::Coarse => {
                self.pool.register_waiter();
                let plan = plan_dispatch(strategy, &model.config, self.pool.size());
                let mut exec = PooledExecutor::new(
                    &self.pool,
                    &plan,
                    &model.config,
                    self.overhead.per_dispatch_overhead,
                );
                let h = execute_wavefront(model, window, &mut exec, arena)?;
                (h, exec.dispatched, Duration::from_nanos(exec.overhead_ns))
            }
        };
        let latency = start.elapsed();
        drop(guard);
        let class = classify(&final_hidden, &model.head)?;
        Ok(InferenceResult {
            class,
            final_hidden,
            telemetry: Telemetry {
                latency,
                dispatched_units,
                injected_overhead,
                arena_allocations: arena.alloc_count(),
            },
        })
    }

    /// Keep `floor(utilization * P)` workers saturated with spin work until
    /// the returned handle is released.
    pub fn simulate_load(&self, profile: &LoadProfile) -> Result<LoadHandle> {
        let workers = ((profile.utilization() * self.pool.size() as f64) + 1e-9).floor() as usize;
        self.pool.occupy(workers)
    }

    /// Fraction of worker time spent busy over a sampling window.
    pub fn measured_utilization(&self, window: Duration) -> f64 {
        let before = self.pool.busy_nanos();
        let start = Instant::now();
        std::thread::sleep(window);
        let elapsed = start.elapsed().as_nanos() as f64;
        let busy = (self.pool.busy_nanos() - before) as f64;
        busy / (elapsed * self.pool.size() as f64)
    }
}

/// Sequential executor: every cell computed inline on the calling thread,
/// one work unit per cell.
#[derive(Default)]
struct InlineExecutor {
    dispatched: u64,
}

impl CellExecutor for InlineExecutor {
    fn execute_wave(&mut self, cells: &mut [CellWork<'_>]) -> Result<()> {
        for cell in cells.iter_mut() {
            self.dispatched += 1;
            cell.run_inline();
        }
        Ok(())
    }
}

/// Pool-backed executor: splits each cell's columns per the dispatch plan,
/// pays the injected overhead per submission, and barriers at wave end.
struct PooledExecutor<'p> {
    pool: &'p WorkerPool,
    ranges: Vec<Range<usize>>,
    followups: Box<[CellFollowUp]>,
    per_dispatch: Duration,
    dispatched: u64,
    overhead_ns: u64,
}

impl<'p> PooledExecutor<'p> {
    fn new(
        pool: &'p WorkerPool,
        plan: &DispatchPlan,
        config: &ModelConfig,
        per_dispatch: Duration,
    ) -> Self {
        let ranges: Vec<Range<usize>> = plan.column_ranges(config.gate_width()).collect();
        let followups = (0..config.num_layers)
            .map(|_| CellFollowUp {
                remaining: AtomicUsize::new(0),
                z: std::ptr::null_mut(),
                c: std::ptr::null_mut(),
                h_out: std::ptr::null_mut(),
                hidden: 0,
                gate_width: 0,
                version: std::ptr::null(),
                wave: 0,
            })
            .collect();
        Self {
            pool,
            ranges,
            followups,
            per_dispatch,
            dispatched: 0,
            overhead_ns: 0,
        }
    }
}

impl CellExecutor for PooledExecutor<'_> {
    fn execute_wave(&mut self, cells: &mut [CellWork<'_>]) -> Result<()> {
        for work in cells.iter_mut() {
            let layer = work.cell.layer;
            let followup = &mut self.followups[layer];
            *followup = CellFollowUp {
                remaining: AtomicUsize::new(self.ranges.len()),
                z: work.z.as_mut_ptr(),
                c: work.c.as_mut_ptr(),
                h_out: work.h_out.as_mut_ptr(),
                hidden: work.c.len(),
                gate_width: work.z.len(),
                version: work.h_version,
                wave: work.wave as u32,
            };
            let followup: *const CellFollowUp = followup;
            for range in &self.ranges {
                if !self.per_dispatch.is_zero() {
                    self.overhead_ns += spin_wait(self.per_dispatch).as_nanos() as u64;
                }
                self.dispatched += 1;
                self.pool.submit_unit(UnitTask {
                    weights: work.weights,
                    concat: work.concat.as_ptr(),
                    concat_len: work.concat.len(),
                    z: work.z.as_mut_ptr(),
                    col_start: range.start,
                    col_len: range.len(),
                    cell: followup,
                });
            }
        }
        self.pool.wait_idle();
        Ok(())
    }
}

/// Calibrated busy-wait; sleep granularity is far too coarse for the
/// microsecond regime this models.
fn spin_wait(duration: Duration) -> Duration {
    let start = Instant::now();
    while start.elapsed() < duration {
        std::hint::spin_loop();
    }
    start.elapsed()
}
