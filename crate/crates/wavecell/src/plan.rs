//! Cell-dependency schedule and buffer planning.
//!
//! The cell grid is the `L x T` lattice of cell evaluations; cell `(l, t)`
//! consumes the hidden output of `(l-1, t)` and the state of `(l, t-1)`.
//! Grouping cells by anti-diagonal `l + t = w` yields waves of mutually
//! independent cells whose predecessors all sit in the previous wave, so a
//! wave can run concurrently between barriers.

use crate::model::ModelConfig;

/// Position of one cell evaluation in the layer x time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellId {
    pub layer: usize,
    pub time: usize,
}

impl CellId {
    /// Anti-diagonal index; all cells of a wave share it.
    pub fn wave(&self) -> usize {
        self.layer + self.time
    }
}

/// Anti-diagonal execution schedule over the cell grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WavePlan {
    waves: Vec<Vec<CellId>>,
}

impl WavePlan {
    pub fn waves(&self) -> &[Vec<CellId>] {
        &self.waves
    }

    pub fn num_waves(&self) -> usize {
        self.waves.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.waves.iter().map(Vec::len).collect()
    }

    /// Widest wave; this is the cell-level parallelism ceiling, min(L, T).
    pub fn max_width(&self) -> usize {
        self.waves.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total_cells(&self) -> usize {
        self.waves.iter().map(Vec::len).sum()
    }
}

/// Wave `w` holds every in-range cell with `l + t = w`, cells ordered by
/// ascending layer. There are `L + T - 1` waves.
pub fn build_wave_plan(config: &ModelConfig) -> WavePlan {
    let (layers, steps) = (config.num_layers, config.time_steps);
    let mut waves = Vec::with_capacity(layers + steps - 1);
    for w in 0..layers + steps - 1 {
        let lo = w.saturating_sub(steps - 1);
        let hi = w.min(layers - 1);
        let wave: Vec<CellId> = (lo..=hi)
            .map(|layer| CellId {
                layer,
                time: w - layer,
            })
            .collect();
        waves.push(wave);
    }
    WavePlan { waves }
}

/// State-buffer budget realized by the arena.
///
/// Only `2L` persistent state buffers (one `c`, one `h` per layer) plus `L`
/// parity-indexed staging buffers are needed, against the naive `2 L T` of
/// allocating fresh state per cell: finished cells hand their buffers to the
/// next cell of the same layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferPlan {
    /// `2L`: one cell-state and one hidden-state buffer per layer.
    pub persistent_state_buffers: usize,
    /// `L`: the second hidden slot per layer; writes alternate slots by wave
    /// parity so same-wave readers never observe a same-wave write.
    pub staging_buffers: usize,
    /// `2 L T`: what per-cell allocation would cost, for reporting.
    pub naive_count: usize,
}

pub fn build_buffer_plan(config: &ModelConfig) -> BufferPlan {
    let layers = config.num_layers;
    BufferPlan {
        persistent_state_buffers: 2 * layers,
        staging_buffers: layers,
        naive_count: 2 * layers * config.time_steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::model::ModelConfig;

    fn cfg(layers: usize, steps: usize) -> Result<ModelConfig> {
        ModelConfig::new(layers, 4, 3, steps, 2)
    }

    #[test]
    fn wave_widths_three_by_four() {
        let plan = build_wave_plan(&cfg(3, 4).unwrap());
        assert_eq!(plan.widths(), vec![1, 2, 3, 3, 2, 1]);
        assert_eq!(plan.max_width(), 3);
    }

    #[test]
    fn single_layer_is_fully_sequential() {
        let plan = build_wave_plan(&cfg(1, 17).unwrap());
        assert_eq!(plan.num_waves(), 17);
        assert!(plan.widths().iter().all(|&w| w == 1));
    }

    #[test]
    fn default_grid_wave_count() {
        let plan = build_wave_plan(&cfg(2, 128).unwrap());
        assert_eq!(plan.num_waves(), 129);
        let widths = plan.widths();
        assert_eq!(widths[0], 1);
        assert_eq!(widths[128], 1);
        assert!(widths[1..128].iter().all(|&w| w == 2));
        assert_eq!(plan.total_cells(), 256);
    }

    /// Every cell appears exactly once, in its own anti-diagonal, ordered by
    /// ascending layer, and both predecessors sit in the previous wave.
    #[test]
    fn wave_plan_partition_and_dependency_safety() {
        for layers in 1..=4 {
            for steps in [1usize, 2, 5, 16] {
                let config = cfg(layers, steps).unwrap();
                let plan = build_wave_plan(&config);
                let mut seen = std::collections::HashSet::new();
                for (w, wave) in plan.waves().iter().enumerate() {
                    let mut prev_layer = None;
                    for cell in wave {
                        assert_eq!(cell.wave(), w);
                        assert!(cell.layer < layers && cell.time < steps);
                        assert!(seen.insert(*cell), "duplicate {cell:?}");
                        if let Some(p) = prev_layer {
                            assert!(cell.layer > p, "wave not ascending by layer");
                        }
                        prev_layer = Some(cell.layer);
                        // predecessors land exactly one wave earlier
                        if cell.layer > 0 {
                            assert_eq!(
                                CellId {
                                    layer: cell.layer - 1,
                                    time: cell.time
                                }
                                .wave(),
                                w - 1
                            );
                        }
                        if cell.time > 0 {
                            assert_eq!(
                                CellId {
                                    layer: cell.layer,
                                    time: cell.time - 1
                                }
                                .wave(),
                                w - 1
                            );
                        }
                    }
                }
                assert_eq!(seen.len(), layers * steps);
                assert_eq!(plan.max_width(), layers.min(steps));
            }
        }
    }

    #[test]
    fn buffer_plan_three_by_four() {
        let plan = build_buffer_plan(&cfg(3, 4).unwrap());
        assert_eq!(plan.persistent_state_buffers, 6);
        assert_eq!(plan.naive_count, 24);
    }

    #[test]
    fn buffer_plan_minimal() {
        let plan = build_buffer_plan(&cfg(1, 1).unwrap());
        assert_eq!(plan.persistent_state_buffers, 2);
        assert_eq!(plan.naive_count, 2);
    }

    #[test]
    fn buffer_plan_default_grid() {
        let plan = build_buffer_plan(&cfg(2, 128).unwrap());
        assert_eq!(plan.persistent_state_buffers, 4);
        assert_eq!(plan.staging_buffers, 2);
        assert_eq!(plan.naive_count, 512);
    }

    /// Persistent count depends on L alone, never on T.
    #[test]
    fn buffer_plan_independent_of_time_steps() {
        for steps in [1usize, 4, 128, 1000] {
            let plan = build_buffer_plan(&cfg(3, steps).unwrap());
            assert_eq!(plan.persistent_state_buffers, 6);
            assert_eq!(plan.staging_buffers, 3);
        }
    }
}
