//! Per-dimension regression metrics over window predictions, raw units.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::DIM_NAMES;
use crate::error::{Error, Result};

/// R^2 is undefined when the targets of a dimension are all identical; the
/// value is NaN and `r2_defined` is false.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DimMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub r2_defined: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub split: String,
    pub condition: String,
    /// "zero_shot" or "retrain".
    pub mode: String,
    /// Indexed as translation, rotation, knob.
    pub dims: [DimMetrics; 3],
    pub n_samples: usize,
}

impl MetricsReport {
    pub fn dim(&self, name: &str) -> Option<&DimMetrics> {
        DIM_NAMES.iter().position(|&d| d == name).map(|i| &self.dims[i])
    }
}

/// predictions, targets: [M, 3] raw units, M >= 2.
pub fn compute_metrics(predictions: &Array2<f64>, targets: &Array2<f64>) -> Result<[DimMetrics; 3]> {
    if predictions.dim() != targets.dim() {
        return Err(Error::ShapeMismatch(format!(
            "metrics shapes {:?} vs {:?}",
            predictions.dim(),
            targets.dim()
        )));
    }
    if predictions.ncols() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "metrics expect 3 columns, got {}",
            predictions.ncols()
        )));
    }
    let m = predictions.nrows();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "metrics need at least 2 samples, got {m}"
        )));
    }
    let mut out = [DimMetrics {
        mse: 0.0,
        rmse: 0.0,
        mae: 0.0,
        r2: 0.0,
        r2_defined: true,
    }; 3];
    for j in 0..3 {
        let mut ss_res = 0.0;
        let mut abs_sum = 0.0;
        let mut mean = 0.0;
        for i in 0..m {
            mean += targets[[i, j]];
        }
        mean /= m as f64;
        let mut ss_tot = 0.0;
        for i in 0..m {
            let e = predictions[[i, j]] - targets[[i, j]];
            ss_res += e * e;
            abs_sum += e.abs();
            let c = targets[[i, j]] - mean;
            ss_tot += c * c;
        }
        let mse = ss_res / m as f64;
        let (r2, defined) = if ss_tot == 0.0 {
            (f64::NAN, false)
        } else {
            (1.0 - ss_res / ss_tot, true)
        };
        out[j] = DimMetrics {
            mse,
            rmse: mse.sqrt(),
            mae: abs_sum / m as f64,
            r2,
            r2_defined: defined,
        };
    }
    Ok(out)
}
