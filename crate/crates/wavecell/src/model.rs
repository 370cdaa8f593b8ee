//! Model shapes, weights, and configuration.
//!
//! A stacked LSTM is described by a [`ModelConfig`] (layer count `L`, hidden
//! width `H`, input dimension `D`, sequence length `T`, class count `C`) and
//! an [`LstmModel`] holding one combined weight matrix per layer plus a dense
//! classifier head. Per-layer weights concatenate the input-to-hidden and
//! hidden-to-hidden matrices so a single matrix-vector product feeds all four
//! gates; the gate blocks are ordered `[input, forget, candidate, output]`
//! along the `4H` output columns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Shape parameters of a stacked-LSTM classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Number of stacked LSTM layers (L).
    pub num_layers: usize,
    /// Hidden state width per layer (H).
    pub hidden_units: usize,
    /// Input feature dimension per time step (D).
    pub input_dim: usize,
    /// Sequence length (T).
    pub time_steps: usize,
    /// Output classes (C).
    pub num_classes: usize,
}

impl Default for ModelConfig {
    /// Two layers of 32 hidden units over 128 steps of 9-dimensional sensor
    /// readings, six activity classes.
    fn default() -> Self {
        Self {
            num_layers: 2,
            hidden_units: 32,
            input_dim: 9,
            time_steps: 128,
            num_classes: 6,
        }
    }
}

impl ModelConfig {
    pub fn new(
        num_layers: usize,
        hidden_units: usize,
        input_dim: usize,
        time_steps: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let cfg = Self {
            num_layers,
            hidden_units,
            input_dim,
            time_steps,
            num_classes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_layers", self.num_layers),
            ("hidden_units", self.hidden_units),
            ("input_dim", self.input_dim),
            ("time_steps", self.time_steps),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Input width of layer `l`: `D` for the first layer, `H` above it.
    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden_units
        }
    }

    /// Combined-matmul output width, one column per gate element.
    pub fn gate_width(&self) -> usize {
        4 * self.hidden_units
    }

    /// Total scalar parameters: per layer `(D_l + H) * 4H` weights plus `4H`
    /// biases, then the `H x C` head and its `C` biases.
    pub fn param_count(&self) -> usize {
        let h = self.hidden_units;
        let mut total = 0;
        for l in 0..self.num_layers {
            total += (self.layer_input_dim(l) + h) * 4 * h + 4 * h;
        }
        total + h * self.num_classes + self.num_classes
    }
}

/// Dense row-major `rows x cols` matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f32 {
        &mut self.data[row * self.cols + col]
    }

    /// Row `row` as a contiguous slice.
    #[inline]
    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// One layer's combined weights: `(D_l + H) x 4H` matrix and a `4H` bias.
///
/// Row `k` holds the weights of concatenated input element `k` (the first
/// `D_l` rows map the layer input, the remaining `H` rows map the previous
/// hidden state). Columns are grouped `[i | f | g | o]`, `H` columns each.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub combined_weight: Matrix,
    pub bias: Vec<f32>,
}

impl LayerWeights {
    pub fn zeros(input_dim: usize, hidden_units: usize) -> Self {
        Self {
            combined_weight: Matrix::zeros(input_dim + hidden_units, 4 * hidden_units),
            bias: vec![0.0; 4 * hidden_units],
        }
    }
}

/// Affine `H -> C` classifier evaluated on the final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// `H x C`, row `j` maps hidden element `j` to each class logit.
    pub weight: Matrix,
    pub bias: Vec<f32>,
}

impl ClassifierHead {
    pub fn zeros(hidden_units: usize, num_classes: usize) -> Self {
        Self {
            weight: Matrix::zeros(hidden_units, num_classes),
            bias: vec![0.0; num_classes],
        }
    }
}

/// A complete stacked-LSTM classifier. Immutable once built; share it
/// read-only across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: ModelConfig,
    pub layers: Vec<LayerWeights>,
    pub head: ClassifierHead,
}

impl LstmModel {
    /// Zero-initialized model of the given shape.
    pub fn zeros(config: ModelConfig) -> Self {
        let layers = (0..config.num_layers)
            .map(|l| LayerWeights::zeros(config.layer_input_dim(l), config.hidden_units))
            .collect();
        let head = ClassifierHead::zeros(config.hidden_units, config.num_classes);
        Self {
            config,
            layers,
            head,
        }
    }

    /// Deterministic pseudo-random model, weights uniform in [-0.5, 0.5).
    /// The same seed always produces a bit-identical model.
    pub fn generate(seed: u64, config: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::zeros(config.clone());
        for layer in &mut model.layers {
            fill_uniform(&mut rng, layer.combined_weight.as_mut_slice());
            fill_uniform(&mut rng, &mut layer.bias);
        }
        fill_uniform(&mut rng, model.head.weight.as_mut_slice());
        fill_uniform(&mut rng, &mut model.head.bias);
        model
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }
}

fn fill_uniform(rng: &mut ChaCha8Rng, out: &mut [f32]) {
    for v in out.iter_mut() {
        *v = rng.gen::<f32>() - 0.5;
    }
}

/// Check every shape invariant and that every stored scalar is finite.
pub fn validate_model(model: &LstmModel) -> Result<()> {
    let cfg = &model.config;
    cfg.validate()?;
    let h = cfg.hidden_units;

    if model.layers.len() != cfg.num_layers {
        return Err(Error::DimensionMismatch {
            what: "layer count",
            expected: cfg.num_layers,
            actual: model.layers.len(),
        });
    }

    for (l, layer) in model.layers.iter().enumerate() {
        let rows = cfg.layer_input_dim(l) + h;
        let cols = 4 * h;
        let w = &layer.combined_weight;
        if w.rows() != rows || w.cols() != cols {
            return Err(Error::ShapeMismatch {
                layer: l,
                expected_rows: rows,
                expected_cols: cols,
                actual_rows: w.rows(),
                actual_cols: w.cols(),
            });
        }
        if layer.bias.len() != cols {
            return Err(Error::ShapeMismatch {
                layer: l,
                expected_rows: 1,
                expected_cols: cols,
                actual_rows: 1,
                actual_cols: layer.bias.len(),
            });
        }
        check_finite(w.as_slice(), w.cols(), &format!("layer {l} weight"))?;
        check_finite(&layer.bias, layer.bias.len(), &format!("layer {l} bias"))?;
    }

    let head = &model.head;
    if head.weight.rows() != h || head.weight.cols() != cfg.num_classes {
        return Err(Error::ShapeMismatch {
            layer: cfg.num_layers,
            expected_rows: h,
            expected_cols: cfg.num_classes,
            actual_rows: head.weight.rows(),
            actual_cols: head.weight.cols(),
        });
    }
    if head.bias.len() != cfg.num_classes {
        return Err(Error::ShapeMismatch {
            layer: cfg.num_layers,
            expected_rows: 1,
            expected_cols: cfg.num_classes,
            actual_rows: 1,
            actual_cols: head.bias.len(),
        });
    }
    check_finite(head.weight.as_slice(), head.weight.cols(), "head weight")?;
    check_finite(&head.bias, head.bias.len(), "head bias")?;
    Ok(())
}

fn check_finite(data: &[f32], cols: usize, what: &str) -> Result<()> {
    for (idx, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteWeight {
                location: format!("{what}[{}][{}]", idx / cols, idx % cols),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_smallest_config() {
        let cfg = ModelConfig::new(1, 1, 1, 1, 1).unwrap();
        assert_eq!(cfg.param_count(), 14);
    }

    #[test]
    fn param_count_default_model() {
        assert_eq!(ModelConfig::default().param_count(), 13_894);
    }

    #[test]
    fn param_count_complexity_sweep() {
        let c64 = ModelConfig::new(2, 64, 9, 128, 6).unwrap();
        let c128 = ModelConfig::new(2, 128, 9, 128, 6).unwrap();
        assert_eq!(c64.param_count(), 52_358);
        assert_eq!(c128.param_count(), 203_014);
        let ratio = c128.param_count() as f64 / c64.param_count() as f64;
        assert!((ratio - 3.88).abs() < 0.01, "ratio {ratio}");
    }

    /// param_count must equal the number of scalars actually materialized.
    #[test]
    fn param_count_matches_materialized_model() {
        for l in 1..=3 {
            for h in [8usize, 32, 64, 128, 256] {
                for d in [1usize, 9, 16] {
                    for c in [1usize, 6] {
                        let cfg = ModelConfig::new(l, h, d, 4, c).unwrap();
                        let model = LstmModel::generate(1, &cfg);
                        let mut count = 0;
                        for layer in &model.layers {
                            count += layer.combined_weight.as_slice().len();
                            count += layer.bias.len();
                        }
                        count += model.head.weight.as_slice().len();
                        count += model.head.bias.len();
                        assert_eq!(cfg.param_count(), count, "L={l} H={h} D={d} C={c}");
                    }
                }
            }
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = ModelConfig::default();
        let a = LstmModel::generate(42, &cfg);
        let b = LstmModel::generate(42, &cfg);
        assert_eq!(a, b);
        let c = LstmModel::generate(43, &cfg);
        assert_ne!(a, c);
    }

    #[test]
    fn generate_weights_in_range() {
        let cfg = ModelConfig::new(1, 8, 3, 4, 2).unwrap();
        let model = LstmModel::generate(7, &cfg);
        for v in model.layers[0].combined_weight.as_slice() {
            assert!((-0.5..0.5).contains(v));
        }
    }

    #[test]
    fn validate_accepts_generated_models() {
        for seed in 0..20 {
            let model = LstmModel::generate(seed, &ModelConfig::default());
            validate_model(&model).unwrap();
        }
    }

    #[test]
    fn validate_rejects_extra_column() {
        let cfg = ModelConfig::new(2, 4, 3, 4, 2).unwrap();
        let mut model = LstmModel::zeros(cfg);
        // 4H + 1 columns on layer 1
        model.layers[1].combined_weight = Matrix::zeros(8, 17);
        match validate_model(&model) {
            Err(Error::ShapeMismatch { layer: 1, .. }) => {}
            other => panic!("expected ShapeMismatch on layer 1, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_nan_weight() {
        let mut model = LstmModel::zeros(ModelConfig::default());
        *model.layers[0].combined_weight.at_mut(3, 7) = f32::NAN;
        match validate_model(&model) {
            Err(Error::NonFiniteWeight { location }) => {
                assert!(location.contains("layer 0"), "{location}");
                assert!(location.contains("[3][7]"), "{location}");
            }
            other => panic!("expected NonFiniteWeight, got {other:?}"),
        }
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(ModelConfig::new(0, 32, 9, 128, 6).is_err());
        assert!(ModelConfig::new(2, 32, 9, 0, 6).is_err());
    }
}
