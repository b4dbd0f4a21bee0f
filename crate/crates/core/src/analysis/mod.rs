//! Gradient-skew measurement, LLE embeddings of gradient clouds, and run
//! summaries.

mod lle;
mod skew;

pub use lle::{lle_embed, lle_weights, neighbor_sets, LleEmbedding, LleParams};
pub use skew::{skew_score, skew_score_with, SkewReport};

use crate::error::{Error, Result};

/// Mean and population standard deviation of per-run best accuracies.
pub fn summarize_runs(best_accuracies: &[f64]) -> Result<(f64, f64)> {
    if best_accuracies.is_empty() {
        return Err(Error::InvalidInput("no runs to summarize".into()));
    }
    let n = best_accuracies.len() as f64;
    let mean = best_accuracies.iter().sum::<f64>() / n;
    let var = best_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
