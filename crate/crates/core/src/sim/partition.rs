use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Concentration used for the IID setting.
pub const IID_BETA: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub beta: f64,
    /// IID: `beta = 1e6` and each class's samples shuffled before allocation.
    pub iid: bool,
    /// Falls back to the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            beta: 0.5,
            iid: false,
            seed: None,
        }
    }
}

impl PartitionSpec {
    pub fn effective_beta(&self) -> f64 {
        if self.iid {
            IID_BETA
        } else {
            self.beta
        }
    }
}

/// Splits `total` into integer counts proportional to `fractions` by
/// largest-remainder rounding (remainder ties go to the lower index).
fn largest_remainder(fractions: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|q| q * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-class Dirichlet split of sample indices across `n` clients.
///
/// For each class a proportion vector is drawn from `Dir_n(beta)` (normalized
/// Gamma draws) and the class's samples are handed out contiguously. Clients
/// may end up with no samples.
pub fn dirichlet_partition(
    labels: &[usize],
    n: usize,
    spec: &PartitionSpec,
    run_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("partition needs at least one client".into()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("no samples to partition".into()));
    }
    let beta = spec.effective_beta();
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let gamma = Gamma::new(beta, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = rng::stream(&[spec.seed.unwrap_or(run_seed), 0xD1]);
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    let mut shards = vec![Vec::new(); n];
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
        if members.is_empty() {
            continue;
        }
        if spec.iid {
            members.shuffle(&mut rng);
        }
        let total: f64 = draws.iter().sum();
        let fractions: Vec<f64> = if total > 0.0 && total.is_finite() {
            draws.iter().map(|g| g / total).collect()
        } else {
            // every draw underflowed: the whole class goes to the largest one
            let top = (0..n).max_by(|&a, &b| draws[a].total_cmp(&draws[b])).unwrap_or(0);
            (0..n).map(|i| if i == top { 1.0 } else { 0.0 }).collect()
        };
        let counts = largest_remainder(&fractions, members.len());
        let mut start = 0;
        for (client, count) in counts.into_iter().enumerate() {
            shards[client].extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    Ok(shards)
}

/// Writes `sample_id,label,client_id` rows ordered by sample id.
pub fn write_partition_csv<W: std::io::Write>(
    writer: W,
    labels: &[usize],
    shards: &[Vec<usize>],
) -> std::io::Result<()> {
    let mut owner = vec![usize::MAX; labels.len()];
    for (client, shard) in shards.iter().enumerate() {
        for &i in shard {
            owner[i] = client;
        }
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["sample_id", "label", "client_id"])?;
    for (i, (&label, &client)) in labels.iter().zip(&owner).enumerate() {
        wtr.write_record([i.to_string(), label.to_string(), client.to_string()])?;
    }
    wtr.flush()
}
