//! Model and dataset file formats plus deterministic generators.
//!
//! Model files are binary, little-endian: magic `MRNN`, a `u32` format
//! version, the five shape fields `L, D, H, T, C` as `u32`, then per layer
//! the row-major `(D_l + H) x 4H` combined weights and `4H` bias as IEEE-754
//! `f32`, then the `H x C` head weights and `C` bias. Save/load round-trips
//! are bit-exact.
//!
//! Datasets are two text files: one window per line of `T * D`
//! whitespace-separated floats in time-major order, and one 1-based integer
//! label per line (remapped to `[0, C)` in memory).

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{LstmModel, Matrix, ModelConfig};

const MAGIC: [u8; 4] = *b"MRNN";
const FORMAT_VERSION: u32 = 1;

pub fn save_model(model: &LstmModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    let cfg = &model.config;
    for dim in [
        cfg.num_layers,
        cfg.input_dim,
        cfg.hidden_units,
        cfg.time_steps,
        cfg.num_classes,
    ] {
        write_u32(&mut w, dim as u32)?;
    }
    for layer in &model.layers {
        write_f32s(&mut w, layer.combined_weight.as_slice())?;
        write_f32s(&mut w, &layer.bias)?;
    }
    write_f32s(&mut w, model.head.weight.as_slice())?;
    write_f32s(&mut w, &model.head.bias)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LstmModel> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let layers = read_u32(&mut r)? as usize;
    let input_dim = read_u32(&mut r)? as usize;
    let hidden = read_u32(&mut r)? as usize;
    let steps = read_u32(&mut r)? as usize;
    let classes = read_u32(&mut r)? as usize;
    let config = ModelConfig::new(layers, hidden, input_dim, steps, classes)?;

    // Size the payload from the header before materializing anything, so a
    // corrupt header cannot trigger a giant allocation.
    let expected = 24u128 + 4 * param_count_wide(layers, input_dim, hidden, classes);
    if (file_len as u128) < expected {
        return Err(Error::TruncatedFile);
    }

    let mut model = LstmModel::zeros(config.clone());
    for l in 0..config.num_layers {
        let rows = config.layer_input_dim(l) + hidden;
        let data = read_f32s(&mut r, rows * 4 * hidden)?;
        model.layers[l].combined_weight = Matrix::from_vec(rows, 4 * hidden, data)?;
        model.layers[l].bias = read_f32s(&mut r, 4 * hidden)?;
    }
    model.head.weight = Matrix::from_vec(hidden, classes, read_f32s(&mut r, hidden * classes)?)?;
    model.head.bias = read_f32s(&mut r, classes)?;
    Ok(model)
}

fn param_count_wide(layers: usize, input_dim: usize, hidden: usize, classes: usize) -> u128 {
    let (l, d, h, c) = (
        layers as u128,
        input_dim as u128,
        hidden as u128,
        classes as u128,
    );
    let first = (d + h) * 4 * h + 4 * h;
    let rest = (l - 1) * (2 * h * 4 * h + 4 * h);
    first + rest + h * c + c
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f32s(w: &mut impl Write, values: &[f32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::TruncatedFile
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32s(r: &mut impl Read, count: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Parse a samples/labels file pair. Labels are 1-based on disk and 0-based
/// in the returned pairs.
pub fn load_dataset(
    samples_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    config: &ModelConfig,
) -> Result<Vec<(Vec<f32>, usize)>> {
    let fields_per_line = config.time_steps * config.input_dim;
    let samples_text = std::fs::read_to_string(samples_path)?;
    let mut windows = Vec::new();
    for (idx, line) in samples_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut window = Vec::with_capacity(fields_per_line);
        for field in line.split_whitespace() {
            let v: f32 = field.parse().map_err(|_| Error::BadField {
                line: line_no,
                field: field.to_string(),
            })?;
            window.push(v);
        }
        if window.len() != fields_per_line {
            return Err(Error::FieldCountMismatch {
                line: line_no,
                expected: fields_per_line,
                actual: window.len(),
            });
        }
        windows.push(window);
    }

    let labels_text = std::fs::read_to_string(labels_path)?;
    let mut labels = Vec::new();
    for (idx, line) in labels_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let label: i64 = line.trim().parse().map_err(|_| Error::BadField {
            line: line_no,
            field: line.trim().to_string(),
        })?;
        if label < 1 || label > config.num_classes as i64 {
            return Err(Error::LabelOutOfRange {
                line: line_no,
                label,
                classes: config.num_classes,
            });
        }
        labels.push((label - 1) as usize);
    }

    if windows.len() != labels.len() {
        return Err(Error::SampleCountMismatch {
            samples: windows.len(),
            labels: labels.len(),
        });
    }
    Ok(windows.into_iter().zip(labels).collect())
}

/// Write a samples/labels pair in the dataset text format. `labels` are
/// 0-based in memory and written 1-based.
pub fn write_dataset(
    samples_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    windows: &[Vec<f32>],
    labels: &[usize],
) -> Result<()> {
    let mut sw = BufWriter::new(File::create(samples_path)?);
    for window in windows {
        let mut first = true;
        for v in window {
            if !first {
                write!(sw, " ")?;
            }
            write!(sw, "{v}")?;
            first = false;
        }
        writeln!(sw)?;
    }
    sw.flush()?;
    let mut lw = BufWriter::new(File::create(labels_path)?);
    for label in labels {
        writeln!(lw, "{}", label + 1)?;
    }
    lw.flush()?;
    Ok(())
}

/// Deterministic synthetic windows, uniform in [-1, 1), time-major.
pub fn generate_windows(seed: u64, count: usize, steps: usize, dims: usize) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..steps * dims)
                .map(|_| rng.gen::<f32>() * 2.0 - 1.0)
                .collect()
        })
        .collect()
}

/// Deterministic synthetic labels, 0-based, uniform over the classes.
pub fn generate_labels(seed: u64, count: usize, classes: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count).map(|_| rng.gen_range(0..classes)).collect()
}
