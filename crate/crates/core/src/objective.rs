//! Misfit functional over the interior region, fitness transform, and the
//! per-instant error series used by reports.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::dataset::{RegionMask, SnapshotMatrix, TimeAxis};
use crate::error::{ensure_arg, Error, Result};

/// Additive guard so that an exact hit has finite fitness.
pub const FITNESS_GUARD: f64 = 1e-12;

/// Target temperatures restricted to the rows of a region mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    values: DMatrix<f64>,
    mask: RegionMask,
    times: TimeAxis,
}

impl Target {
    /// `values` is `|mask| × N_s`, row `i` belonging to `mask.indices()[i]`.
    pub fn new(values: DMatrix<f64>, mask: RegionMask, times: TimeAxis) -> Result<Self> {
        ensure_arg!(
            values.nrows() == mask.len(),
            "target has {} rows, mask selects {} cells",
            values.nrows(),
            mask.len()
        );
        ensure_arg!(
            values.ncols() == times.n_steps(),
            "target has {} columns, time axis has {} instants",
            values.ncols(),
            times.n_steps()
        );
        ensure_arg!(values.iter().all(|v| v.is_finite()), "target contains non-finite values");
        Ok(Target { values, mask, times })
    }

    /// Restricts a full field to `mask`.
    pub fn from_field(field: &SnapshotMatrix, mask: RegionMask) -> Result<Self> {
        ensure_arg!(
            mask.indices().iter().all(|&j| j < field.grid().len()),
            "mask indexes cells outside the field's grid"
        );
        let values = field.values().select_rows(mask.indices());
        Target::new(values, mask, *field.times())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
    pub fn mask(&self) -> &RegionMask {
        &self.mask
    }
    pub fn times(&self) -> &TimeAxis {
        &self.times
    }
}

/// `J = (1/N_s) Σ_n Σ_{j∈mask} w_j (Θⁿ_j − Θ̂ⁿ_j)²` for a mask-restricted field.
pub fn cost(theta: &DMatrix<f64>, target: &Target) -> Result<f64> {
    ensure_arg!(
        theta.shape() == target.values.shape(),
        "field is {:?}, target is {:?}",
        theta.shape(),
        target.values.shape()
    );
    let w = target.mask.weights();
    let mut total = 0.0;
    for (col, tcol) in theta.column_iter().zip(target.values.column_iter()) {
        for ((a, b), wj) in col.iter().zip(tcol.iter()).zip(w) {
            let d = a - b;
            total += wj * d * d;
        }
    }
    Ok(total / theta.ncols() as f64)
}

/// `1 / (J + guard)`.
pub fn fitness(j: f64) -> Result<f64> {
    ensure_arg!(j >= 0.0, "cost must be nonnegative, got {j}");
    Ok(1.0 / (j + FITNESS_GUARD))
}

/// Percentage error `100·‖Θⁿ − Θ̂ⁿ‖₂ / ‖Θ̂ⁿ‖₂` per time column.
pub fn l2_error_series(theta: &DMatrix<f64>, target_full: &DMatrix<f64>) -> Result<Vec<f64>> {
    ensure_arg!(
        theta.shape() == target_full.shape(),
        "field is {:?}, target is {:?}",
        theta.shape(),
        target_full.shape()
    );
    theta
        .column_iter()
        .zip(target_full.column_iter())
        .enumerate()
        .map(|(n, (a, b))| {
            let norm = b.norm();
            if norm == 0.0 {
                return Err(Error::Argument(format!("target column {n} has zero norm")));
            }
            Ok(100.0 * (a - b).norm() / norm)
        })
        .collect()
}

/// Writes `index,value` rows under a header.
pub fn write_series_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut out = String::from("index,value\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v}").expect("writing to a String");
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

/// Reads a file written by [`write_series_csv`].
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "index,value" => {}
        _ => return Err(Error::Format("series CSV must start with `index,value`".into())),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let (idx, val) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected two fields", i + 2)))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad index", i + 2)))?;
            ensure_arg!(idx == i, "line {}: index {idx} out of sequence", i + 2);
            val.trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad value", i + 2)))
        })
        .collect()
}
