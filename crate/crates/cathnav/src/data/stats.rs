//! Per-dimension state statistics, z-scoring, and the stats fingerprint that
//! ties checkpoints to the training distribution.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DIM_NAMES: [&str; 3] = ["translation", "rotation", "knob"];

/// Standard deviations at or below this are treated as degenerate; the
/// dimension passes through unstandardized.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dims: [DimStats; 3],
    pub n_rows: usize,
}

/// Statistics over the flat concatenation of all state rows. Std is the
/// population standard deviation.
pub fn dataset_stats<'a>(
    episodes: impl IntoIterator<Item = &'a [[f64; 3]]>,
) -> Result<DatasetStats> {
    let mut n = 0usize;
    let mut sum = [0.0f64; 3];
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut rows_cache: Vec<[f64; 3]> = Vec::new();
    for ep in episodes {
        for row in ep {
            n += 1;
            for d in 0..3 {
                sum[d] += row[d];
                min[d] = min[d].min(row[d]);
                max[d] = max[d].max(row[d]);
            }
            rows_cache.push(*row);
        }
    }
    if n == 0 {
        return Err(Error::Dataset("statistics over an empty subset".into()));
    }
    let mean = [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64];
    let mut sq = [0.0f64; 3];
    for row in &rows_cache {
        for d in 0..3 {
            let dev = row[d] - mean[d];
            sq[d] += dev * dev;
        }
    }
    let dims = std::array::from_fn(|d| DimStats {
        mean: mean[d],
        std: (sq[d] / n as f64).sqrt(),
        min: min[d],
        max: max[d],
    });
    Ok(DatasetStats { dims, n_rows: n })
}

pub fn standardize(row: &[f64; 3], stats: &DatasetStats) -> [f64; 3] {
    std::array::from_fn(|d| {
        let s = &stats.dims[d];
        if s.std > STD_FLOOR {
            (row[d] - s.mean) / s.std
        } else {
            row[d]
        }
    })
}

pub fn destandardize(row: &[f64; 3], stats: &DatasetStats) -> [f64; 3] {
    std::array::from_fn(|d| {
        let s = &stats.dims[d];
        if s.std > STD_FLOOR {
            row[d] * s.std + s.mean
        } else {
            row[d]
        }
    })
}

/// Content hash of the statistics, recorded in checkpoints and manifests so
/// a model is never evaluated against a different normalization.
pub fn stats_fingerprint(stats: &DatasetStats) -> String {
    let mut h = Sha256::new();
    for d in &stats.dims {
        for v in [d.mean, d.std, d.min, d.max] {
            h.update(format!("{v:.17e};").as_bytes());
        }
    }
    h.update(stats.n_rows.to_le_bytes());
    let digest = h.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
