//! Preallocated buffer arena.
//!
//! Every buffer an inference touches is allocated once, up front, from the
//! model shape and worker count; the hot path performs no allocation at all.
//! An allocation counter makes that a testable invariant: it moves at
//! construction time and never again.
//!
//! Hidden-state buffers come in two parity slots per layer (persistent +
//! staging). A cell in wave `w` writes its hidden output to slot `w % 2` and
//! readers in wave `w + 1` pull from the same slot, so a same-wave writer can
//! never clobber a value a same-wave reader still needs. Cell-state buffers
//! are updated in place: only one cell per wave touches a given layer.

use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Fixed-capacity buffer set for one in-flight inference.
pub struct Arena {
    config: ModelConfig,
    worker_count: usize,
    /// Cell state per layer, updated in place.
    pub(crate) cell_state: Vec<Box<[f32]>>,
    /// Hidden state per layer, parity-0 slot.
    pub(crate) hidden_persistent: Vec<Box<[f32]>>,
    /// Hidden state per layer, parity-1 slot.
    pub(crate) hidden_staging: Vec<Box<[f32]>>,
    /// Gate pre-activation scratch, `4H` wide. One slot per worker and at
    /// least one per layer; concurrently active cells own the slot of their
    /// layer and workers write disjoint column ranges of it.
    pub(crate) gate_scratch: Vec<Box<[f32]>>,
    /// Concatenated `[x ; h_prev]` input scratch, `max(D, H) + H` wide,
    /// slot-indexed like `gate_scratch`.
    pub(crate) concat_scratch: Vec<Box<[f32]>>,
    /// Wave-version tags for the hidden slots (`wave + 1` of the last write,
    /// 0 = initial zeros). Checked under debug assertions only.
    pub(crate) hidden_version: [Vec<AtomicU32>; 2],
    alloc_counter: u64,
    in_use: Arc<AtomicBool>,
}

/// Marks an arena as exclusively owned until dropped.
pub struct ArenaGuard {
    flag: Arc<AtomicBool>,
}

impl Drop for ArenaGuard {
    fn drop(&mut self) {
        self.flag.store(false, Ordering::Release);
    }
}

fn alloc_buffer(len: usize, counter: &mut u64) -> Result<Box<[f32]>> {
    let mut v: Vec<f32> = Vec::new();
    v.try_reserve_exact(len).map_err(|_| Error::OutOfMemory)?;
    v.resize(len, 0.0);
    *counter += 1;
    Ok(v.into_boxed_slice())
}

impl Arena {
    /// Allocate all buffers for `config` and a pool of `worker_count` workers.
    pub fn new(config: &ModelConfig, worker_count: usize) -> Result<Self> {
        config.validate()?;
        if worker_count == 0 {
            return Err(Error::InvalidConfig("worker_count must be >= 1".into()));
        }
        let layers = config.num_layers;
        let hidden = config.hidden_units;
        let slots = worker_count.max(layers);
        let concat_len = config.input_dim.max(hidden) + hidden;

        let mut counter = 0;
        let per_layer = |len: usize, counter: &mut u64| -> Result<Vec<Box<[f32]>>> {
            (0..layers).map(|_| alloc_buffer(len, counter)).collect()
        };
        let cell_state = per_layer(hidden, &mut counter)?;
        let hidden_persistent = per_layer(hidden, &mut counter)?;
        let hidden_staging = per_layer(hidden, &mut counter)?;
        let gate_scratch: Vec<_> = (0..slots)
            .map(|_| alloc_buffer(config.gate_width(), &mut counter))
            .collect::<Result<_>>()?;
        let concat_scratch: Vec<_> = (0..slots)
            .map(|_| alloc_buffer(concat_len, &mut counter))
            .collect::<Result<_>>()?;
        let hidden_version = [
            (0..layers).map(|_| AtomicU32::new(0)).collect(),
            (0..layers).map(|_| AtomicU32::new(0)).collect(),
        ];

        Ok(Self {
            config: config.clone(),
            worker_count,
            cell_state,
            hidden_persistent,
            hidden_staging,
            gate_scratch,
            concat_scratch,
            hidden_version,
            alloc_counter: counter,
            in_use: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn worker_count(&self) -> usize {
        self.worker_count
    }

    /// Count of `c`/`h` state buffers: `2L`, independent of sequence length.
    pub fn persistent_state_buffers(&self) -> usize {
        self.cell_state.len() + self.hidden_persistent.len()
    }

    /// Count of parity-1 hidden staging buffers: `L`.
    pub fn staging_buffers(&self) -> usize {
        self.hidden_staging.len()
    }

    /// Count of gate scratch buffers: `max(worker_count, L)`.
    pub fn gate_scratch_buffers(&self) -> usize {
        self.gate_scratch.len()
    }

    pub fn concat_scratch_buffers(&self) -> usize {
        self.concat_scratch.len()
    }

    /// Length of each gate scratch buffer (`4H`).
    pub fn gate_scratch_len(&self) -> usize {
        self.config.gate_width()
    }

    /// Monotone count of raw buffer allocations performed by this arena.
    /// Constant after construction: steady-state inference allocates nothing.
    pub fn alloc_count(&self) -> u64 {
        self.alloc_counter
    }

    /// Claim exclusive use. Fails with [`Error::Busy`] while another claim is
    /// outstanding.
    pub fn begin_exclusive(&self) -> Result<ArenaGuard> {
        if self.in_use.swap(true, Ordering::AcqRel) {
            return Err(Error::Busy);
        }
        Ok(ArenaGuard {
            flag: Arc::clone(&self.in_use),
        })
    }

    /// Zero the persistent and staging state (restores `c0 = h0 = 0`).
    /// Performs no allocation. Fails with [`Error::Busy`] mid-inference.
    pub fn reset(&mut self) -> Result<()> {
        if self.in_use.load(Ordering::Acquire) {
            return Err(Error::Busy);
        }
        self.reset_states();
        Ok(())
    }

    pub(crate) fn reset_states(&mut self) {
        for buf in self
            .cell_state
            .iter_mut()
            .chain(self.hidden_persistent.iter_mut())
            .chain(self.hidden_staging.iter_mut())
        {
            buf.fill(0.0);
        }
        for tags in &self.hidden_version {
            for tag in tags {
                tag.store(0, Ordering::Relaxed);
            }
        }
    }

    /// Hidden slot of `layer` for the given wave parity (0 = persistent,
    /// 1 = staging).
    pub(crate) fn hidden_slot(&self, parity: usize, layer: usize) -> &[f32] {
        match parity {
            0 => &self.hidden_persistent[layer],
            _ => &self.hidden_staging[layer],
        }
    }
}
