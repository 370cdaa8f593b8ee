//! Wavefront execution driver.
//!
//! Walks the wave plan one anti-diagonal at a time with a full barrier
//! between waves. At each wave boundary the driver snapshots every active
//! cell's inputs (`[x ; h_prev]`) into that layer's concat scratch, then
//! hands the whole wave to a [`CellExecutor`], which may compute the cells
//! inline or scatter their columns across a worker pool. Hidden outputs land
//! in the parity slot of the wave, away from the slot same-wave readers were
//! snapshotted from.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::arena::Arena;
use crate::error::{Error, Result};
use crate::kernels;
use crate::model::{LayerWeights, LstmModel};
use crate::plan::{build_wave_plan, CellId};

/// One cell's evaluation, bundled with views into the arena: the snapshotted
/// concat input, the layer's shared gate buffer, and the state buffers to
/// update. Handed to executors a wave at a time; cells of a wave may run
/// concurrently.
pub struct CellWork<'a> {
    pub cell: CellId,
    pub weights: &'a LayerWeights,
    /// `[x ; h_prev]`, length `D_l + H`.
    pub concat: &'a [f32],
    /// Gate pre-activation output, length `4H`. Work units write disjoint
    /// column ranges.
    pub z: &'a mut [f32],
    /// Cell state, previous value on entry; overwritten in place.
    pub c: &'a mut [f32],
    /// Hidden output slot for this wave's parity.
    pub h_out: &'a mut [f32],
    pub(crate) h_version: &'a AtomicU32,
    pub(crate) wave: usize,
}

impl CellWork<'_> {
    /// Compute the full cell on the calling thread: all gate columns in
    /// ascending row order, then the fused epilogue.
    pub fn run_inline(&mut self) {
        kernels::accumulate_gate_columns(self.weights, self.concat, 0, self.z);
        kernels::fused_epilogue_inplace(self.z, self.c, self.h_out);
        self.mark_written();
    }

    pub(crate) fn mark_written(&self) {
        self.h_version
            .store(self.wave as u32 + 1, Ordering::Release);
    }
}

/// A conforming cell executor: given one wave of mutually independent cells,
/// it must leave every cell's `z`, `c`, and `h_out` fully computed before
/// returning.
pub trait CellExecutor {
    fn execute_wave(&mut self, cells: &mut [CellWork<'_>]) -> Result<()>;
}

impl<F> CellExecutor for F
where
    F: for<'a, 'b> FnMut(&'a mut [CellWork<'b>]) -> Result<()>,
{
    fn execute_wave(&mut self, cells: &mut [CellWork<'_>]) -> Result<()> {
        self(cells)
    }
}

/// Run the full cell grid in wavefront order and return the hidden state of
/// the last cell (layer `L-1`, time `T-1`).
///
/// `input` is the `T x D` window, time-major. The result is numerically
/// equivalent to strict layer-by-layer, time-by-time evaluation; executors
/// that keep each column's summation order (all built-in ones do) reproduce
/// it bit for bit.
pub fn execute_wavefront<E: CellExecutor>(
    model: &LstmModel,
    input: &[f32],
    executor: &mut E,
    arena: &mut Arena,
) -> Result<Vec<f32>> {
    let cfg = &model.config;
    if arena.config() != cfg {
        return Err(Error::ArenaMismatch(
            "arena was built for a different model shape".into(),
        ));
    }
    let (layers, steps) = (cfg.num_layers, cfg.time_steps);
    let (input_dim, hidden) = (cfg.input_dim, cfg.hidden_units);
    if input.len() != steps * input_dim {
        return Err(Error::DimensionMismatch {
            what: "input window",
            expected: steps * input_dim,
            actual: input.len(),
        });
    }

    arena.reset_states();
    let plan = build_wave_plan(cfg);

    for (w, wave) in plan.waves().iter().enumerate() {
        let write_parity = w & 1;
        let read_parity = write_parity ^ 1;

        // Snapshot each cell's inputs at the wave boundary. Sources were
        // written no later than wave w-1; the tags prove it in debug builds.
        for cell in wave {
            let l = cell.layer;
            let dl = cfg.layer_input_dim(l);
            let concat = &mut arena.concat_scratch[l];
            if l == 0 {
                let t = cell.time;
                concat[..dl].copy_from_slice(&input[t * input_dim..(t + 1) * input_dim]);
            } else {
                debug_assert!(
                    arena.hidden_version[read_parity][l - 1].load(Ordering::Acquire) as usize <= w,
                    "hidden slot ({read_parity},{}) written in wave {w} while being read",
                    l - 1
                );
                let below = match read_parity {
                    0 => &arena.hidden_persistent[l - 1],
                    _ => &arena.hidden_staging[l - 1],
                };
                concat[..dl].copy_from_slice(below);
            }
            debug_assert!(
                arena.hidden_version[read_parity][l].load(Ordering::Acquire) as usize <= w,
                "hidden slot ({read_parity},{l}) written in wave {w} while being read"
            );
            let h_prev = match read_parity {
                0 => &arena.hidden_persistent[l],
                _ => &arena.hidden_staging[l],
            };
            concat[dl..dl + hidden].copy_from_slice(h_prev);
        }

        // Hand the wave to the executor with disjoint views per cell.
        let hidden_write = match write_parity {
            0 => &mut arena.hidden_persistent,
            _ => &mut arena.hidden_staging,
        };
        let versions = &arena.hidden_version[write_parity];
        let layer_indices = wave.iter().map(|c| c.layer);
        let gates = disjoint_mut(&mut arena.gate_scratch, layer_indices.clone());
        let states = disjoint_mut(&mut arena.cell_state, layer_indices.clone());
        let hiddens = disjoint_mut(hidden_write, layer_indices);

        let mut works: Vec<CellWork> = wave
            .iter()
            .zip(gates)
            .zip(states)
            .zip(hiddens)
            .map(|(((cell, z), c), h_out)| {
                let l = cell.layer;
                let rows = cfg.layer_input_dim(l) + hidden;
                CellWork {
                    cell: *cell,
                    weights: &model.layers[l],
                    concat: &arena.concat_scratch[l][..rows],
                    z,
                    c,
                    h_out,
                    h_version: &versions[l],
                    wave: w,
                }
            })
            .collect();
        executor.execute_wave(&mut works)?;
    }

    let final_parity = (layers + steps - 2) & 1;
    Ok(arena.hidden_slot(final_parity, layers - 1).to_vec())
}

/// Mutable references to strictly ascending indices of `slice`.
fn disjoint_mut<'a, T>(
    slice: &'a mut [T],
    indices: impl Iterator<Item = usize>,
) -> Vec<&'a mut T> {
    let mut out = Vec::new();
    let mut rest = slice;
    let mut base = 0;
    for i in indices {
        let local = i - base;
        let (head, tail) = std::mem::take(&mut rest).split_at_mut(local + 1);
        out.push(&mut head[local]);
        base = i + 1;
        rest = tail;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::cell_step;
    use crate::model::ModelConfig;

    fn inline_all(cells: &mut [CellWork<'_>]) -> Result<()> {
        for cell in cells {
            cell.run_inline();
        }
        Ok(())
    }

    fn window(seed: u64, steps: usize, dim: usize) -> Vec<f32> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..steps * dim).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect()
    }

    /// A single-layer wavefront degenerates to a plain cell_step loop.
    #[test]
    fn single_layer_equals_plain_loop() {
        let cfg = ModelConfig::new(1, 8, 3, 16, 2).unwrap();
        let model = LstmModel::generate(3, &cfg);
        let input = window(4, 16, 3);
        let mut arena = Arena::new(&cfg, 2).unwrap();
        let via_wavefront =
            execute_wavefront(&model, &input, &mut inline_all, &mut arena).unwrap();

        let mut h = vec![0.0f32; 8];
        let mut c = vec![0.0f32; 8];
        for t in 0..16 {
            let state = cell_step(&input[t * 3..(t + 1) * 3], &h, &c, &model.layers[0]).unwrap();
            h = state.h;
            c = state.c;
        }
        assert_eq!(via_wavefront, h);
    }

    #[test]
    fn rejects_wrong_window_length() {
        let cfg = ModelConfig::new(1, 4, 3, 4, 2).unwrap();
        let model = LstmModel::generate(1, &cfg);
        let mut arena = Arena::new(&cfg, 1).unwrap();
        let err = execute_wavefront(&model, &[0.0; 11], &mut inline_all, &mut arena);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_mismatched_arena() {
        let cfg = ModelConfig::new(2, 4, 3, 4, 2).unwrap();
        let other = ModelConfig::new(2, 8, 3, 4, 2).unwrap();
        let model = LstmModel::generate(1, &cfg);
        let mut arena = Arena::new(&other, 1).unwrap();
        let err = execute_wavefront(&model, &[0.0; 12], &mut inline_all, &mut arena);
        assert!(matches!(err, Err(Error::ArenaMismatch(_))));
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let cfg = ModelConfig::new(3, 8, 3, 16, 2).unwrap();
        let model = LstmModel::generate(9, &cfg);
        let input = window(10, 16, 3);
        let mut arena = Arena::new(&cfg, 2).unwrap();
        let a = execute_wavefront(&model, &input, &mut inline_all, &mut arena).unwrap();
        arena.reset().unwrap();
        let b = execute_wavefront(&model, &input, &mut inline_all, &mut arena).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn disjoint_mut_returns_requested_slots() {
        let mut data = [0, 10, 20, 30, 40];
        let picked = disjoint_mut(&mut data, [1usize, 4].into_iter());
        assert_eq!(picked.len(), 2);
        *picked.into_iter().next().unwrap() = 99;
        assert_eq!(data[1], 99);
    }
}
