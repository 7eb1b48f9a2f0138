//! EMB1 embedding files.
//!
//! Layout, all little-endian:
//!
//! | offset          | size      | field                       |
//! |-----------------|-----------|-----------------------------|
//! | 0               | 4         | magic `b"EMB1"`             |
//! | 4               | 4         | `N` (u32, rows)             |
//! | 8               | 4         | `d` (u32, feature width)    |
//! | 12              | 4         | `C` (u32, class count)      |
//! | 16              | `4 N d`   | features, f32, row-major    |
//! | `16 + 4 N d`    | `4 N`     | labels, u32                 |
//!
//! Features are stored as f32 and widened to f64 on load.

use std::fs;
use std::path::Path;

use subspace_core::{LabeledDataset, Matrix, Split};

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 16;

fn format_err(offset: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

/// Encodes a dataset; features are rounded to f32.
pub fn encode(data: &LabeledDataset) -> Result<Vec<u8>> {
    let n = data.len();
    let d = data.dim();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v)
            .map_err(|_| HarnessError::Report(format!("{what} = {v} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * (d + 1));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&to_u32(n, "N")?.to_le_bytes());
    out.extend_from_slice(&to_u32(d, "d")?.to_le_bytes());
    out.extend_from_slice(&to_u32(data.num_classes(), "C")?.to_le_bytes());
    for &v in data.features().data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(HarnessError::Report(format!("feature {v} overflows f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    for &l in data.labels() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    Ok(out)
}

/// Parses an EMB1 byte buffer. Nothing is returned unless the whole buffer is valid.
pub fn decode(bytes: &[u8], split: Split) -> Result<LabeledDataset> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let n = read_u32(bytes, 4) as usize;
    let d = read_u32(bytes, 8) as usize;
    let c = read_u32(bytes, 12) as usize;
    if n == 0 {
        return Err(format_err(4, "N must be at least 1"));
    }
    if d == 0 {
        return Err(format_err(8, "d must be at least 1"));
    }
    if c < 2 {
        return Err(format_err(12, format!("C must be at least 2, got {c}")));
    }
    let feature_bytes = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| format_err(4, "N x d overflows"))?;
    let labels_at = HEADER_LEN + feature_bytes;
    let expected = labels_at + 4 * n;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated payload: header needs {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(
            expected,
            format!("{} trailing bytes after payload", bytes.len() - expected),
        ));
    }
    let mut features = Vec::with_capacity(n * d);
    for (i, chunk) in bytes[HEADER_LEN..labels_at].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(
                HEADER_LEN + 4 * i,
                format!("non-finite feature {v}"),
            ));
        }
        features.push(v as f64);
    }
    let mut labels = Vec::with_capacity(n);
    for (i, chunk) in bytes[labels_at..].chunks_exact(4).enumerate() {
        let l = u32::from_le_bytes(chunk.try_into().unwrap()) as usize;
        if l >= c {
            return Err(format_err(
                labels_at + 4 * i,
                format!("label {l} is not below C = {c}"),
            ));
        }
        labels.push(l);
    }
    Ok(LabeledDataset::new(
        Matrix::new(n, d, features)?,
        labels,
        c,
        split,
    )?)
}

pub fn save_embeddings(path: impl AsRef<Path>, data: &LabeledDataset) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(data)?;
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>, split: Split) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes, split)
}

/// Reads a CSV fixture: one row per sample, features then an integer label in
/// the last column. A non-numeric first line is treated as a header. `C` is
/// one more than the largest label unless given.
pub fn load_csv(
    path: impl AsRef<Path>,
    split: Split,
    num_classes: Option<usize>,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(HarnessError::Config(format!(
                    "{} line {}: {e}",
                    path.display(),
                    line + 1
                )))
            }
        };
        let (label, feats) = values
            .split_last()
            .filter(|(_, f)| !f.is_empty())
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "{} line {}: need features and a label",
                    path.display(),
                    line + 1
                ))
            })?;
        if label.fract() != 0.0 || *label < 0.0 {
            return Err(HarnessError::Config(format!(
                "{} line {}: label {label} is not a class index",
                path.display(),
                line + 1
            )));
        }
        labels.push(*label as usize);
        rows.push(feats.to_vec());
    }
    let c = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Ok(LabeledDataset::new(
        Matrix::from_rows(&rows)?,
        labels,
        c,
        split,
    )?)
}
