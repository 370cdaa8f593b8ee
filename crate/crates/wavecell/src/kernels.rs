//! Numeric kernels for one LSTM cell step.
//!
//! A cell step is one combined matrix-vector product feeding all four gates,
//! followed by a fused pointwise epilogue that produces the new cell and
//! hidden state in a single pass. Both kernels are branch-free in their inner
//! loops and accumulate each output column in ascending input order, so any
//! partition of the columns into work units produces bit-identical results.

use crate::error::{Error, Result};
use crate::model::{ClassifierHead, LayerWeights};

/// Pre-activation gate values: the `4H` outputs of the combined matmul,
/// blocked `[i | f | g | o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub z: Vec<f32>,
}

/// Cell state `c` and hidden state `h` of one layer at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub c: Vec<f32>,
    pub h: Vec<f32>,
}

impl CellState {
    pub fn zeros(hidden_units: usize) -> Self {
        Self {
            c: vec![0.0; hidden_units],
            h: vec![0.0; hidden_units],
        }
    }
}

/// Logistic sigmoid, branch-free. Saturates cleanly at 0 and 1 for large
/// magnitude inputs (`exp` overflow yields `inf`, never `NaN`).
#[inline(always)]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Accumulate output columns `[col_start, col_start + out.len())` of the
/// combined matmul into `out`: `out[j] = bias[col] + sum_k W[k][col] * concat[k]`.
///
/// The sum over `k` runs in ascending row order for every column. Work units
/// split the gate width by columns, never within a column, so this order is
/// what makes sequential, fine-grained, and coarse execution bit-identical.
pub fn accumulate_gate_columns(
    weights: &LayerWeights,
    concat: &[f32],
    col_start: usize,
    out: &mut [f32],
) {
    let w = &weights.combined_weight;
    let rows = w.rows();
    let stride = w.cols();
    let col_end = col_start + out.len();
    debug_assert!(col_end <= stride);
    debug_assert_eq!(concat.len(), rows);

    out.copy_from_slice(&weights.bias[col_start..col_end]);
    let data = w.as_slice();
    for (k, &x) in concat.iter().enumerate() {
        let row = &data[k * stride + col_start..k * stride + col_end];
        for (acc, &wv) in out.iter_mut().zip(row) {
            *acc += wv * x;
        }
    }
}

/// Combined matmul over the concatenated `[x ; h_prev]` input:
/// `z = W^T . [x ; h_prev] + b`.
pub fn combined_matvec(
    x: &[f32],
    h_prev: &[f32],
    weights: &LayerWeights,
) -> Result<GateActivations> {
    let rows = weights.combined_weight.rows();
    if x.len() + h_prev.len() != rows {
        return Err(Error::DimensionMismatch {
            what: "combined matmul input",
            expected: rows,
            actual: x.len() + h_prev.len(),
        });
    }
    let mut concat = Vec::with_capacity(rows);
    concat.extend_from_slice(x);
    concat.extend_from_slice(h_prev);
    let mut z = vec![0.0; weights.combined_weight.cols()];
    accumulate_gate_columns(weights, &concat, 0, &mut z);
    Ok(GateActivations { z })
}

/// Fused pointwise epilogue, in place: reads gate pre-activations `z` and the
/// previous cell state in `c`, overwrites `c` and `h` with the new states.
/// One pass per element, no intermediate gate buffers.
pub fn fused_epilogue_inplace(z: &[f32], c: &mut [f32], h: &mut [f32]) {
    let hd = c.len();
    debug_assert_eq!(z.len(), 4 * hd);
    debug_assert_eq!(h.len(), hd);
    let (zi, rest) = z.split_at(hd);
    let (zf, rest) = rest.split_at(hd);
    let (zg, zo) = rest.split_at(hd);
    for j in 0..hd {
        let i = sigmoid(zi[j]);
        let f = sigmoid(zf[j]);
        let g = zg[j].tanh();
        let o = sigmoid(zo[j]);
        let cv = f * c[j] + i * g;
        c[j] = cv;
        h[j] = o * cv.tanh();
    }
}

/// Gate split and pointwise state update: `c = f.c_prev + i.g`, `h = o.tanh(c)`.
pub fn fused_cell_epilogue(z: &GateActivations, c_prev: &[f32]) -> Result<CellState> {
    if z.z.len() != 4 * c_prev.len() {
        return Err(Error::DimensionMismatch {
            what: "gate activations",
            expected: 4 * c_prev.len(),
            actual: z.z.len(),
        });
    }
    let mut state = CellState {
        c: c_prev.to_vec(),
        h: vec![0.0; c_prev.len()],
    };
    fused_epilogue_inplace(&z.z, &mut state.c, &mut state.h);
    Ok(state)
}

/// One full cell step: combined matmul then fused epilogue.
pub fn cell_step(
    x: &[f32],
    h_prev: &[f32],
    c_prev: &[f32],
    weights: &LayerWeights,
) -> Result<CellState> {
    if h_prev.len() != c_prev.len() {
        return Err(Error::DimensionMismatch {
            what: "cell state",
            expected: h_prev.len(),
            actual: c_prev.len(),
        });
    }
    let z = combined_matvec(x, h_prev, weights)?;
    fused_cell_epilogue(&z, c_prev)
}

/// Argmax over `head^T . h + bias`; ties break toward the lowest index.
pub fn classify(h_final: &[f32], head: &ClassifierHead) -> Result<usize> {
    if head.weight.rows() != h_final.len() {
        return Err(Error::DimensionMismatch {
            what: "classifier input",
            expected: head.weight.rows(),
            actual: h_final.len(),
        });
    }
    let classes = head.weight.cols();
    let mut best = 0;
    let mut best_logit = f32::NEG_INFINITY;
    for cls in 0..classes {
        let mut logit = head.bias[cls];
        for (j, &hv) in h_final.iter().enumerate() {
            logit += head.weight.at(j, cls) * hv;
        }
        if logit > best_logit {
            best_logit = logit;
            best = cls;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f32::max)
    }

    /// Naive double-loop matvec, kept independent of the production kernel.
    fn matvec_oracle(w: &LayerWeights, concat: &[f32]) -> Vec<f32> {
        let cols = w.combined_weight.cols();
        let mut z = vec![0.0f32; cols];
        for (j, zv) in z.iter_mut().enumerate() {
            let mut acc = w.bias[j];
            for (k, &x) in concat.iter().enumerate() {
                acc += w.combined_weight.at(k, j) * x;
            }
            *zv = acc;
        }
        z
    }

    fn random_weights(rng: &mut ChaCha8Rng, d: usize, h: usize) -> LayerWeights {
        let mut w = LayerWeights::zeros(d, h);
        for v in w.combined_weight.as_mut_slice() {
            *v = rng.gen::<f32>() - 0.5;
        }
        for v in &mut w.bias {
            *v = rng.gen::<f32>() - 0.5;
        }
        w
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn matvec_zero_map() {
        let w = LayerWeights::zeros(3, 2);
        let z = combined_matvec(&[1.0, -2.0, 3.0], &[0.5, -0.5], &w).unwrap();
        assert_eq!(z.z, vec![0.0; 8]);
    }

    #[test]
    fn matvec_indicator_column() {
        // A single 1 at (row k=4, col j=5) selects concat[4] into z[5].
        let mut w = LayerWeights::zeros(3, 2);
        *w.combined_weight.at_mut(4, 5) = 1.0;
        let z = combined_matvec(&[1.0, 2.0, 3.0], &[4.0, 5.0], &w).unwrap();
        let mut expected = vec![0.0; 8];
        expected[5] = 5.0;
        assert_eq!(z.z, expected);
    }

    #[test]
    fn matvec_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_weights(&mut rng, 3, 2);
        let x = random_vec(&mut rng, 3);
        let h = random_vec(&mut rng, 2);
        let z = combined_matvec(&x, &h, &w).unwrap();
        let mut concat = x.clone();
        concat.extend_from_slice(&h);
        let expected = matvec_oracle(&w, &concat);
        assert!(max_abs_diff(&z.z, &expected) <= 1e-6);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let w = LayerWeights::zeros(3, 2);
        assert!(combined_matvec(&[1.0, 2.0], &[0.0, 0.0], &w).is_err());
    }

    /// Splitting the combined matrix into its x and h row blocks and summing
    /// the two products must agree with the combined kernel.
    #[test]
    fn matvec_matches_split_formulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let (d, h) = (rng.gen_range(1..8), rng.gen_range(1..8));
            let w = random_weights(&mut rng, d, h);
            let x = random_vec(&mut rng, d);
            let hp = random_vec(&mut rng, h);
            let z = combined_matvec(&x, &hp, &w).unwrap();
            let cols = 4 * h;
            let mut split = vec![0.0f32; cols];
            for (j, s) in split.iter_mut().enumerate() {
                let mut wx = 0.0f32;
                for k in 0..d {
                    wx += w.combined_weight.at(k, j) * x[k];
                }
                let mut wh = 0.0f32;
                for k in 0..h {
                    wh += w.combined_weight.at(d + k, j) * hp[k];
                }
                *s = wx + wh + w.bias[j];
            }
            assert!(max_abs_diff(&z.z, &split) <= 1e-6);
        }
    }

    #[test]
    fn epilogue_zero_fixed_point() {
        let z = GateActivations { z: vec![0.0; 8] };
        let state = fused_cell_epilogue(&z, &[0.0, 0.0]).unwrap();
        assert_eq!(state.c, vec![0.0, 0.0]);
        assert_eq!(state.h, vec![0.0, 0.0]);
    }

    /// Saturated gates: forget ~1 and input ~0 carry the old cell state
    /// through untouched; output ~0 silences h.
    #[test]
    fn epilogue_gate_saturation() {
        let h = 4;
        let c_prev = [0.3f32, -0.7, 1.5, 0.0];
        let mut z = vec![0.0f32; 4 * h];
        z[..h].fill(-1000.0); // i -> 0
        z[h..2 * h].fill(1000.0); // f -> 1
        z[2 * h..3 * h].fill(0.0); // g = 0
        z[3 * h..].fill(-1000.0); // o -> 0
        let state = fused_cell_epilogue(&GateActivations { z }, &c_prev).unwrap();
        for j in 0..h {
            assert!((state.c[j] - c_prev[j]).abs() < 1e-6);
            assert!(state.h[j].abs() < 1e-6);
        }
    }

    /// Frozen scalar oracle: sigma and tanh evaluated stepwise (f64) on
    /// z = (0.5, -0.25, 1.0, 0.75), c_prev = 0.3 gives
    /// c = 0.605408439, h = 0.367358867.
    #[test]
    fn epilogue_scalar_oracle() {
        let z = GateActivations {
            z: vec![0.5, -0.25, 1.0, 0.75],
        };
        let state = fused_cell_epilogue(&z, &[0.3]).unwrap();
        assert!((state.c[0] - 0.605_408_439).abs() < 1e-6, "c {}", state.c[0]);
        assert!((state.h[0] - 0.367_358_867).abs() < 1e-6, "h {}", state.h[0]);
    }

    /// Frozen hand instance, D=1 H=1: weights laid out per gate order
    /// [i f g o], evaluated stepwise with f64 sigma/tanh gives
    /// z = (0.21, -0.35, 0.69, -0.45), c = 0.454284915, h = 0.165639845.
    #[test]
    fn cell_step_scalar_oracle() {
        let mut w = LayerWeights::zeros(1, 1);
        w.combined_weight = Matrix::from_vec(2, 4, vec![0.5, -0.3, 0.8, 0.1, 0.2, 0.4, -0.6, 0.7])
            .unwrap();
        w.bias = vec![0.05, -0.15, 0.25, -0.35];
        let z = combined_matvec(&[0.4], &[-0.2], &w).unwrap();
        let expected_z = [0.21f32, -0.35, 0.69, -0.45];
        assert!(max_abs_diff(&z.z, &expected_z) <= 1e-6);
        let state = cell_step(&[0.4], &[-0.2], &[0.3], &w).unwrap();
        assert!((state.c[0] - 0.454_284_915).abs() < 1e-6, "c {}", state.c[0]);
        assert!((state.h[0] - 0.165_639_845).abs() < 1e-6, "h {}", state.h[0]);
    }

    #[test]
    fn cell_step_zero_stays_zero_over_time() {
        let w = LayerWeights::zeros(2, 3);
        let mut state = CellState::zeros(3);
        for _ in 0..128 {
            state = cell_step(&[0.0, 0.0], &state.h, &state.c, &w).unwrap();
        }
        assert_eq!(state.c, vec![0.0; 3]);
        assert_eq!(state.h, vec![0.0; 3]);
    }

    /// Unfused reference: separate i/f/g/o buffers, then combine.
    fn epilogue_oracle(z: &[f32], c_prev: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let hd = c_prev.len();
        let i: Vec<f32> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f32> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f32> = z[2 * hd..3 * hd].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f32> = z[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f32> = (0..hd).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let h: Vec<f32> = (0..hd).map(|j| o[j] * c[j].tanh()).collect();
        (c, h)
    }

    #[test]
    fn fusion_equivalence_thousand_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let hd = rng.gen_range(1..=256);
            let z: Vec<f32> = (0..4 * hd).map(|_| rng.gen::<f32>() * 8.0 - 4.0).collect();
            let c_prev: Vec<f32> = (0..hd).map(|_| rng.gen::<f32>() * 4.0 - 2.0).collect();
            let fused = fused_cell_epilogue(&GateActivations { z: z.clone() }, &c_prev).unwrap();
            let (c, h) = epilogue_oracle(&z, &c_prev);
            assert!(max_abs_diff(&fused.c, &c) <= 1e-6);
            assert!(max_abs_diff(&fused.h, &h) <= 1e-6);
        }
    }

    /// |h| < 1 strictly while the activations stay below f32 saturation
    /// (tanh rounds to exactly 1.0 past ~x = 9).
    #[test]
    fn hidden_state_strictly_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let hd = rng.gen_range(1..=64);
            let z: Vec<f32> = (0..4 * hd).map(|_| rng.gen::<f32>() * 16.0 - 8.0).collect();
            let c_prev: Vec<f32> = (0..hd).map(|_| rng.gen::<f32>() * 4.0 - 2.0).collect();
            let state = fused_cell_epilogue(&GateActivations { z }, &c_prev).unwrap();
            for j in 0..hd {
                assert!(state.h[j].abs() < 1.0);
                assert!(state.c[j].abs() <= c_prev[j].abs() + 1.0 + 1e-6);
            }
        }
    }

    /// Under extreme inputs rounding may land exactly on the boundary, never
    /// beyond it.
    #[test]
    fn hidden_state_bounded_at_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let hd = rng.gen_range(1..=64);
            let z: Vec<f32> = (0..4 * hd)
                .map(|_| rng.gen::<f32>() * 2000.0 - 1000.0)
                .collect();
            let c_prev: Vec<f32> = (0..hd).map(|_| rng.gen::<f32>() * 20.0 - 10.0).collect();
            let state = fused_cell_epilogue(&GateActivations { z }, &c_prev).unwrap();
            for j in 0..hd {
                assert!(state.h[j].abs() <= 1.0);
                assert!(state.c[j].abs() <= c_prev[j].abs() + 1.0 + 1e-6);
                assert!(state.c[j].is_finite());
            }
        }
    }

    #[test]
    fn classify_bias_only() {
        let mut head = ClassifierHead::zeros(4, 6);
        head.bias = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(classify(&[0.5, -0.5, 0.25, 0.0], &head).unwrap(), 1);
    }

    #[test]
    fn classify_tie_breaks_low() {
        let head = ClassifierHead::zeros(4, 6);
        assert_eq!(classify(&[1.0, 2.0, 3.0, 4.0], &head).unwrap(), 0);
    }

    #[test]
    fn classify_matches_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let (hd, classes) = (rng.gen_range(1..16), rng.gen_range(1..8));
            let mut head = ClassifierHead::zeros(hd, classes);
            for v in head.weight.as_mut_slice() {
                *v = rng.gen::<f32>() - 0.5;
            }
            for v in &mut head.bias {
                *v = rng.gen::<f32>() - 0.5;
            }
            let h = random_vec(&mut rng, hd);
            // naive scan
            let mut logits = vec![0.0f32; classes];
            for (c, lv) in logits.iter_mut().enumerate() {
                let mut acc = head.bias[c];
                for j in 0..hd {
                    acc += head.weight.at(j, c) * h[j];
                }
                *lv = acc;
            }
            let mut best = 0;
            for c in 1..classes {
                if logits[c] > logits[best] {
                    best = c;
                }
            }
            assert_eq!(classify(&h, &head).unwrap(), best);
        }
    }

    #[test]
    fn sigmoid_saturates_branch_free() {
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-7);
    }
}
