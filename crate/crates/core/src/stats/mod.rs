//! Vector statistics and small numerical kernels shared by the aggregation
//! rules, attacks and analysis code.
//!
//! Standard deviations are population deviations (divide by the row count)
//! and even-count medians take the midpoint of the two central values.

mod batch;
pub mod linalg;
pub mod vector;

pub use batch::{ClientId, GradientBatch};
pub use linalg::{smallest_eigenpairs, top_singular_direction, EigenPair, SingularDirection};

use crate::error::{Error, Result};

/// Coordinate-wise arithmetic mean.
pub fn coordinate_mean(batch: &GradientBatch) -> Vec<f64> {
    vector::mean_of(batch.row_slices(), batch.dim())
}

/// Coordinate-wise median.
pub fn coordinate_median(batch: &GradientBatch) -> Vec<f64> {
    let mut column = vec![0.0; batch.len()];
    (0..batch.dim())
        .map(|k| {
            for (slot, row) in column.iter_mut().zip(batch.rows()) {
                *slot = row[k];
            }
            vector::median(&mut column)
        })
        .collect()
}

/// Coordinate-wise population standard deviation.
pub fn coordinate_std(batch: &GradientBatch) -> Vec<f64> {
    let mean = coordinate_mean(batch);
    let inv = 1.0 / batch.len() as f64;
    let mut var = vec![0.0; batch.dim()];
    for row in batch.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.into_iter().map(|v| (v * inv).sqrt()).collect()
}

/// Largest Euclidean distance between any two rows; zero for a single row.
pub fn pairwise_diameter(batch: &GradientBatch) -> f64 {
    let rows = batch.rows();
    let mut best = 0.0f64;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            best = best.max(vector::dist_sq(&rows[i], &rows[j]));
        }
    }
    best.sqrt()
}

/// `<v, u / |u|>`.
pub fn scalar_projection(v: &[f64], u: &[f64]) -> Result<f64> {
    if v.len() != u.len() {
        return Err(Error::InvalidInput(format!(
            "projection of length-{} vector on length-{} direction",
            v.len(),
            u.len()
        )));
    }
    let n = vector::norm(u);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    Ok(vector::dot(v, u) / n)
}
