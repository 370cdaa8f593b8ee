//! Stacked-LSTM inference engine with wavefront cell scheduling, pluggable
//! work-unit factorization, and an injectable dispatch-overhead cost model.
//!
//! The engine evaluates an `L x T` grid of LSTM cells. Cells are scheduled by
//! anti-diagonal waves (all cells of a wave are mutually independent), state
//! buffers live in a preallocated arena that is reused across every cell and
//! every inference, and each cell's combined matmul can be factorized three
//! ways:
//!
//! * **sequential** — one unit per cell, inline on the control thread;
//! * **fine-grained** — one unit per output column, the desktop-accelerator
//!   style that collapses once each dispatch carries a fixed overhead;
//! * **coarse** — columns packed into one chunk per worker.
//!
//! Since no unit ever splits a column, all three produce bit-identical
//! output, which makes the latency comparison a pure scheduling experiment.
//! A load-aware policy picks the executor from the measured worker
//! utilization.
//!
//! ## Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release -p wavecell --example cell_kernels         # one cell step, fused epilogue
//! cargo run --release -p wavecell --example wave_schedule        # wave plan + buffer budget
//! cargo run --release -p wavecell --example dispatch_plans       # work-unit factorizations
//! cargo run --release -p wavecell --example overhead_pathology   # fine-grained slowdown sweep
//! cargo run --release -p wavecell --example coarse_speedup       # parallel speedup vs model size
//! cargo run --release -p wavecell --example arena_reuse          # zero steady-state allocation
//! cargo run --release -p wavecell --example load_policy          # utilization-aware offloading
//! cargo run --release -p wavecell --example har_pipeline         # end-to-end file workflow
//! ```
//!
//! The `wavecell` binary wraps the same library behind `gen-model`,
//! `gen-data`, `infer`, `bench`, and `validate` subcommands.

pub mod arena;
pub mod bench;
pub mod error;
pub mod exec;
pub mod io;
pub mod kernels;
pub mod model;
pub mod plan;
pub mod wavefront;

pub use arena::{Arena, ArenaGuard};
pub use error::{Error, Result};
pub use exec::{
    choose_executor, plan_dispatch, DispatchPlan, Engine, InferenceResult, LoadBucket,
    LoadHandle, LoadProfile, LoadThresholds, OverheadModel, Strategy, Telemetry, WorkUnit,
    WorkerPool,
};
pub use kernels::{
    cell_step, classify, combined_matvec, fused_cell_epilogue, CellState, GateActivations,
};
pub use model::{
    validate_model, ClassifierHead, LayerWeights, LstmModel, Matrix, ModelConfig,
};
pub use plan::{build_buffer_plan, build_wave_plan, BufferPlan, CellId, WavePlan};
pub use wavefront::{execute_wavefront, CellExecutor, CellWork};
