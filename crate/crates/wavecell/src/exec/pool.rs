//! Persistent worker pool with allocation-free work-unit dispatch.
//!
//! Workers live for the lifetime of the pool; only work-unit submission pays
//! the injected per-dispatch overhead, modeling a device command queue where
//! every call from the control thread has a fixed cost. Tasks are plain
//! structs sent over a bounded channel, so steady-state dispatch performs no
//! heap allocation. The control thread parks at wave barriers; the worker
//! completing the last outstanding unit unparks it.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle, Thread};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender};

use crate::error::{Error, Result};
use crate::kernels;

const QUEUE_CAPACITY: usize = 1024;
/// Occupancy jobs flush spin time into the busy meter in slices this long,
/// so utilization probes taken mid-window see up-to-date numbers.
const OCCUPY_FLUSH: Duration = Duration::from_micros(200);

/// Completion chain for one cell: the worker that finishes the cell's last
/// matmul unit runs the fused epilogue in place and tags the hidden slot.
pub(crate) struct CellFollowUp {
    pub remaining: AtomicUsize,
    pub z: *mut f32,
    pub c: *mut f32,
    pub h_out: *mut f32,
    pub hidden: usize,
    pub gate_width: usize,
    pub version: *const AtomicU32,
    pub wave: u32,
}

unsafe impl Send for CellFollowUp {}
unsafe impl Sync for CellFollowUp {}

/// One matmul work unit: a contiguous column range of one cell's gate output.
///
/// Safety contract: all pointers reference the model and arena of an
/// inference whose control thread keeps them alive and untouched until the
/// wave barrier confirms completion; `[col_start, col_start + col_len)`
/// ranges are disjoint across the units of a cell.
pub(crate) struct UnitTask {
    pub weights: *const crate::model::LayerWeights,
    pub concat: *const f32,
    pub concat_len: usize,
    pub z: *mut f32,
    pub col_start: usize,
    pub col_len: usize,
    pub cell: *const CellFollowUp,
}

unsafe impl Send for UnitTask {}

impl UnitTask {
    unsafe fn run(&self) {
        let weights = &*self.weights;
        let concat = std::slice::from_raw_parts(self.concat, self.concat_len);
        {
            let out = std::slice::from_raw_parts_mut(self.z.add(self.col_start), self.col_len);
            kernels::accumulate_gate_columns(weights, concat, self.col_start, out);
        }
        let cell = &*self.cell;
        if cell.remaining.fetch_sub(1, Ordering::AcqRel) == 1 {
            // Last unit of the cell: every column write is now visible here.
            let z = std::slice::from_raw_parts(cell.z, cell.gate_width);
            let c = std::slice::from_raw_parts_mut(cell.c, cell.hidden);
            let h = std::slice::from_raw_parts_mut(cell.h_out, cell.hidden);
            kernels::fused_epilogue_inplace(z, c, h);
            (*cell.version).store(cell.wave + 1, Ordering::Release);
        }
    }
}

enum Job {
    Unit(UnitTask),
    Occupy {
        release: Arc<AtomicBool>,
        started: Arc<AtomicUsize>,
    },
    Shutdown,
}

struct Shared {
    /// Units submitted, monotone across waves and inferences.
    expected: AtomicU64,
    /// Units finished, monotone.
    completed: AtomicU64,
    waiter: Mutex<Option<Thread>>,
    busy_ns: Vec<AtomicU64>,
}

/// Fixed-size pool of persistent workers.
pub struct WorkerPool {
    sender: Sender<Job>,
    shared: Arc<Shared>,
    handles: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    pub fn new(size: usize) -> Self {
        assert!(size >= 1, "worker pool needs at least one worker");
        let (sender, receiver) = bounded::<Job>(QUEUE_CAPACITY);
        let shared = Arc::new(Shared {
            expected: AtomicU64::new(0),
            completed: AtomicU64::new(0),
            waiter: Mutex::new(None),
            busy_ns: (0..size).map(|_| AtomicU64::new(0)).collect(),
        });
        let handles = (0..size)
            .map(|id| {
                let rx = receiver.clone();
                let shared = Arc::clone(&shared);
                thread::Builder::new()
                    .name(format!("wavecell-worker-{id}"))
                    .spawn(move || worker_loop(id, rx, shared))
                    .expect("spawn worker")
            })
            .collect();
        Self {
            sender,
            shared,
            handles,
        }
    }

    pub fn size(&self) -> usize {
        self.handles.len()
    }

    /// Nanoseconds of work executed across all workers since pool creation.
    pub fn busy_nanos(&self) -> u64 {
        self.shared
            .busy_ns
            .iter()
            .map(|b| b.load(Ordering::Relaxed))
            .sum()
    }

    /// Register the calling thread as the one to unpark at barriers.
    pub(crate) fn register_waiter(&self) {
        *self.shared.waiter.lock().unwrap() = Some(thread::current());
    }

    pub(crate) fn submit_unit(&self, task: UnitTask) {
        self.shared.expected.fetch_add(1, Ordering::Release);
        self.sender.send(Job::Unit(task)).expect("worker pool hung up");
    }

    /// Block until every submitted unit has completed. Parks rather than
    /// spins so the control thread's core is free for workers.
    pub(crate) fn wait_idle(&self) {
        let target = self.shared.expected.load(Ordering::Acquire);
        while self.shared.completed.load(Ordering::Acquire) < target {
            thread::park_timeout(Duration::from_millis(2));
        }
    }

    /// Pin `count` workers in spin loops until the returned handle is
    /// released. Blocks until all of them are actually spinning.
    pub(crate) fn occupy(&self, count: usize) -> Result<LoadHandle> {
        let release = Arc::new(AtomicBool::new(false));
        let started = Arc::new(AtomicUsize::new(0));
        for _ in 0..count {
            self.sender
                .send(Job::Occupy {
                    release: Arc::clone(&release),
                    started: Arc::clone(&started),
                })
                .expect("worker pool hung up");
        }
        let deadline = Instant::now() + Duration::from_secs(5);
        while started.load(Ordering::Acquire) < count {
            if Instant::now() > deadline {
                release.store(true, Ordering::Release);
                return Err(Error::Busy);
            }
            thread::sleep(Duration::from_micros(100));
        }
        Ok(LoadHandle {
            release,
            workers_held: count,
        })
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        for _ in 0..self.handles.len() {
            let _ = self.sender.send(Job::Shutdown);
        }
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}

/// Keeps a set of pool workers saturated until released (or dropped).
pub struct LoadHandle {
    release: Arc<AtomicBool>,
    workers_held: usize,
}

impl LoadHandle {
    /// Number of workers this load keeps busy.
    pub fn workers_held(&self) -> usize {
        self.workers_held
    }

    pub fn release(self) {}
}

impl Drop for LoadHandle {
    fn drop(&mut self) {
        self.release.store(true, Ordering::Release);
    }
}

fn worker_loop(id: usize, receiver: Receiver<Job>, shared: Arc<Shared>) {
    while let Ok(job) = receiver.recv() {
        match job {
            Job::Unit(task) => {
                let t0 = Instant::now();
                unsafe { task.run() };
                shared.busy_ns[id].fetch_add(t0.elapsed().as_nanos() as u64, Ordering::Relaxed);
                let done = shared.completed.fetch_add(1, Ordering::Release) + 1;
                if done == shared.expected.load(Ordering::Acquire) {
                    if let Some(t) = shared.waiter.lock().unwrap().as_ref() {
                        t.unpark();
                    }
                }
            }
            Job::Occupy { release, started } => {
                started.fetch_add(1, Ordering::Release);
                let mut last_flush = Instant::now();
                while !release.load(Ordering::Acquire) {
                    std::hint::spin_loop();
                    let now = Instant::now();
                    if now.duration_since(last_flush) >= OCCUPY_FLUSH {
                        shared.busy_ns[id].fetch_add(
                            now.duration_since(last_flush).as_nanos() as u64,
                            Ordering::Relaxed,
                        );
                        last_flush = now;
                    }
                }
                let now = Instant::now();
                shared.busy_ns[id].fetch_add(
                    now.duration_since(last_flush).as_nanos() as u64,
                    Ordering::Relaxed,
                );
            }
            Job::Shutdown => break,
        }
    }
}
